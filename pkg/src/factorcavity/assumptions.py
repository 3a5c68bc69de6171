"""Executable checkers for the model hypotheses used by the Bethe pipeline.

Four checks: finite positive-mean degrees (DEG), a constant marginal-sum
weight constant (SYM), uniform-maximising concave mean-table polynomials
(BAL), and the three-term convexity inequality (POS).  SYM is exact; BAL is
a grid check; POS is a randomised falsifier, so a pass means "no violation
found", never a proof.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridTooCoarse
from .graphmodel import DegreeSpec, WeightFamily
from .rng import spin_permutations, substream


@dataclass
class CheckReport:
    """Outcome of one hypothesis check.

    ``witness`` is a violating configuration and is present iff the check
    failed; ``detail`` is the largest violation magnitude observed (0 when
    passing); ``info`` carries check-specific numbers such as the computed
    weight constant.
    """

    name: str
    passed: bool
    witness: Optional[object] = None
    detail: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.passed and self.witness is not None:
            raise ValueError("a passing report cannot carry a witness")
        if not self.passed and self.witness is None:
            raise ValueError("a failing report must carry a witness")


def check_deg(dspec: DegreeSpec, kspec: DegreeSpec) -> CheckReport:
    """Bounded support with positive means; reports first two moments."""
    info = {
        "d_mean": dspec.mean, "d_second": dspec.second_moment,
        "k_mean": kspec.mean, "k_second": kspec.second_moment,
    }
    if dspec.mean <= 0:
        return CheckReport("DEG", False, witness="E[d]=0", detail=1.0, info=info)
    if kspec.mean <= 0:
        return CheckReport("DEG", False, witness="E[k]=0", detail=1.0, info=info)
    return CheckReport("DEG", True, info=info)


def check_sym(family: WeightFamily, tol: float = 1e-9) -> CheckReport:
    """Exact loop over all (arity, table, coordinate, spin) marginal sums.

    Passes iff every sum q^{1-k} sum_{s: s_j = w} psi(s) equals the same
    constant within tol and every table entry is strictly positive.  The
    constant is reported as info['xi'].
    """
    sums = family.marginal_sums()
    values = np.concatenate([rows.ravel() for rows in sums.values()])
    xi = float(values.mean())
    spread = float(values.max() - values.min())
    min_entry = family.min_entry()
    info = {"xi": xi, "spread": spread, "min_entry": min_entry}
    if min_entry <= 0:
        return CheckReport("SYM", False, witness=("nonpositive-entry", min_entry),
                           detail=abs(min_entry), info=info)
    if spread > tol:
        witness = None
        for (k, i), rows in sums.items():
            dev = np.abs(rows - xi)
            j, w = np.unravel_index(int(dev.argmax()), rows.shape)
            if witness is None or dev[j, w] > witness[-1]:
                witness = (k, i, int(j), int(w), float(dev[j, w]))
        return CheckReport("SYM", False, witness=witness, detail=spread, info=info)
    return CheckReport("SYM", True, detail=spread, info=info)


def _simplex_grid(q: int, resolution: int) -> np.ndarray:
    """All probability vectors with entries multiples of 1/resolution."""
    pts = []
    for comp in itertools.combinations_with_replacement(range(q), resolution):
        vec = np.bincount(comp, minlength=q) / resolution
        pts.append(vec)
    return np.asarray(pts)


def _mean_poly(table: np.ndarray, points: np.ndarray) -> np.ndarray:
    """f(mu) = sum_s table(s) prod_i mu(s_i) for every grid point."""
    k = table.ndim
    npts = len(points)
    tmp = np.broadcast_to(table, (npts,) + table.shape)
    for _ in range(k):
        tmp = np.einsum("g...q,gq->g...", tmp, points)
    return tmp


def check_bal(family: WeightFamily, grid_resolution: int = 64,
              tol: float = 1e-9, pairs: int = 2000, seed: int = 0) -> CheckReport:
    """Grid maximum at the barycenter plus midpoint concavity, per arity.

    Sound but incomplete: the polynomial is evaluated on a simplex lattice
    and concavity is probed on sampled point pairs only.
    """
    q = family.q
    if q > 4:
        warnings.warn("simplex grid is coarse for q > 4", GridTooCoarse)
    uniform = np.full(q, 1.0 / q)
    rng = substream(seed, 50)
    worst = 0.0
    witness = None
    info = {}
    for k in family.arities:
        mean_table = family.mean_table(k)
        grid = _simplex_grid(q, grid_resolution)
        vals = _mean_poly(mean_table, grid)
        f_uniform = float(_mean_poly(mean_table, uniform[None])[0])
        gap = float(vals.max()) - f_uniform
        info[f"k{k}_max_gap"] = gap
        if gap > tol:
            arg = grid[int(vals.argmax())]
            if gap > worst:
                worst, witness = gap, ("max-not-uniform", k, tuple(arg.round(6)))
        idx = rng.integers(0, len(grid), size=(pairs, 2))
        a, b = grid[idx[:, 0]], grid[idx[:, 1]]
        mids = _mean_poly(mean_table, 0.5 * (a + b))
        ends = 0.5 * (_mean_poly(mean_table, a) + _mean_poly(mean_table, b))
        conc = float((ends - mids).max())
        info[f"k{k}_concavity_gap"] = max(conc, 0.0)
        if conc > tol:
            at = int((ends - mids).argmax())
            if conc > worst:
                worst, witness = conc, ("midpoint-convexity", k,
                                        tuple(a[at].round(6)), tuple(b[at].round(6)))
    if witness is not None:
        return CheckReport("BAL", False, witness=witness, detail=worst, info=info)
    return CheckReport("BAL", True, info=info)


# ---------------------------------------------------------------------------
# POS falsifier
# ---------------------------------------------------------------------------


def _symmetrise(points: np.ndarray, weights: np.ndarray, q: int):
    """Average a population over all alphabet permutations.

    The result has the exact barycenter 1/q, as required of candidate
    populations.
    """
    perms = spin_permutations(q)
    pts = np.concatenate([points[:, p] for p in perms], axis=0)
    wts = np.concatenate([weights / len(perms)] * len(perms))
    return pts, wts


def _candidate_population(q: int, rng: np.random.Generator, max_points: int):
    """One random finite-support element of the barycentric simplex measures."""
    q_fact = math.factorial(q)
    cloud = max(1, max_points // q_fact)
    kind = rng.integers(0, 4)
    if kind == 0:          # uniform atom
        return np.full((1, q), 1.0 / q), np.array([1.0])
    if kind == 1:          # symmetrised Dirichlet cloud
        alpha = rng.choice([0.2, 0.5, 1.0, 5.0])
        pts = rng.dirichlet([alpha] * q, size=cloud)
        return _symmetrise(pts, np.full(cloud, 1.0 / cloud), q)
    if kind == 2:          # symmetrised polarised atom
        lam = rng.uniform(0.01, 0.3)
        pts = (1 - lam) * np.eye(q)[:1] + lam / q
        return _symmetrise(pts, np.array([1.0]), q)
    # skewed two-atom population with exact uniform barycenter (q = 2 only);
    # for larger alphabets fall back to a symmetrised cloud
    if q == 2:
        p = rng.uniform(0.55, 0.98)
        r = rng.uniform(0.02, 0.45)
        a = (0.5 - r) / (p - r)
        pts = np.array([[p, 1 - p], [r, 1 - r]])
        return pts, np.array([a, 1 - a])
    pts = rng.dirichlet([0.3] * q, size=max(1, cloud // 2))
    return _symmetrise(pts, np.full(len(pts), 1.0 / len(pts)), q)


def _candidate_pair(q: int, rng: np.random.Generator, max_points: int):
    pts_a, w_a = _candidate_population(q, rng, max_points)
    style = rng.integers(0, 3)
    if style == 0:         # independent partner
        pts_b, w_b = _candidate_population(q, rng, max_points)
    elif style == 1:       # mirror partner: relabelled alphabet
        perm = rng.permutation(q)
        if np.array_equal(perm, np.arange(q)):
            perm = np.roll(perm, 1)
        pts_b, w_b = pts_a[:, perm], w_a
    else:                  # uniform-atom partner
        pts_b, w_b = np.full((1, q), 1.0 / q), np.array([1.0])
    return (pts_a, w_a), (pts_b, w_b)


def _mix_grid(table: np.ndarray, point_sets) -> np.ndarray:
    """sum_tau psi(tau) prod_i mu_i(tau_i) on the product grid of supports.

    ``point_sets[i]`` is an (s_i, q) matrix; the result has shape
    (s_1, ..., s_k).
    """
    tmp = table
    for i, pts in enumerate(point_sets):
        tmp = np.tensordot(pts, tmp, axes=([1], [i]))
        tmp = np.moveaxis(tmp, 0, i)
    return tmp


def _expected_lambda(family: WeightFamily, k: int, point_sets, weight_sets) -> float:
    """E[Lambda(mix)] over iid population draws per slot and the table choice."""
    w_outer = weight_sets[0]
    for w in weight_sets[1:]:
        w_outer = np.multiply.outer(w_outer, w)
    coefs = family.product_form_coefficients(k)
    if coefs is not None:
        # two-spin parity tables: the mix is 1 + c * prod of point biases
        bias = point_sets[0][:, 0] - point_sets[0][:, 1]
        for pts in point_sets[1:]:
            bias = np.multiply.outer(bias, pts[:, 0] - pts[:, 1])
        grid = 1.0 + coefs.reshape((-1,) + (1,) * k) * bias
        lam = grid * np.log(grid)
        per_table = (lam * w_outer).reshape(len(coefs), -1).sum(axis=1)
        return float(np.dot(family.masses[k], per_table))
    total = 0.0
    for mass, table in zip(family.masses[k], family.tables[k]):
        grid = _mix_grid(table, point_sets)
        total += mass * float(np.sum(w_outer * grid * np.log(grid)))
    return total


def pos_margin(family: WeightFamily, k: int, pop_a, pop_b) -> float:
    """LHS minus RHS of the three-term inequality; negative means violated."""
    pts_a, w_a = pop_a
    pts_b, w_b = pop_b
    t1 = _expected_lambda(family, k, [pts_a] * k, [w_a] * k)
    t2 = (k - 1) * _expected_lambda(family, k, [pts_b] * k, [w_b] * k)
    t3 = 0.0
    for j in range(k):
        sets = [pts_b] * k
        wts = [w_b] * k
        sets[j] = pts_a
        wts[j] = w_a
        t3 += _expected_lambda(family, k, sets, wts)
    return t1 + t2 - t3


def check_pos(family: WeightFamily, trials: int = 1000,
              population_size: int = 12, seed: int = 0,
              *, grid_cap: int = 500_000, tol: float = 1e-9) -> CheckReport:
    """Randomised falsifier for the three-term convexity inequality.

    Samples candidate population pairs (atoms, Dirichlet clouds, polarised
    and mirror populations), evaluates the inequality exactly on their
    finite supports for every arity, and fails on any margin below -tol.
    A pass means no violation was found in ``trials`` attempts; it is a
    one-sided check, not a proof.
    """
    rng = substream(seed, 60)
    worst = 0.0
    witness = None
    checked = 0
    for trial in range(trials):
        pop_a, pop_b = _candidate_pair(family.q, rng, population_size)
        for k in family.arities:
            if max(len(pop_a[0]), len(pop_b[0])) ** k > grid_cap:
                continue
            margin = pos_margin(family, k, pop_a, pop_b)
            checked += 1
            if margin < -tol:
                worst = margin
                witness = {"k": k, "trial": trial, "margin": margin,
                           "pi": pop_a, "pi_prime": pop_b}
                break
        if witness is not None:
            break
    info = {"trials": trials, "evaluations": checked, "worst_margin": worst,
            "semantics": "no-violation-found" if witness is None else "violation"}
    if witness is not None:
        return CheckReport("POS", False, witness=witness, detail=-worst, info=info)
    return CheckReport("POS", True, info=info)


def check_all(dspec: DegreeSpec, kspec: DegreeSpec, family: WeightFamily,
              *, pos_trials: int = 300, seed: int = 0) -> dict:
    """Run all four checkers; returns {name: CheckReport}."""
    return {
        "DEG": check_deg(dspec, kspec),
        "SYM": check_sym(family),
        "BAL": check_bal(family, seed=seed),
        "POS": check_pos(family, trials=pos_trials, seed=seed),
    }
