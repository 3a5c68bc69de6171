"""Concrete weight families: parity-check codes over a noisy channel, the
regular block model / Potts antiferromagnet, and the diluted mixed-interaction
spin model with discretised Gaussian couplings.

Spin index convention for two-spin models: index 0 is +1 (bit 0), index 1 is
-1 (bit 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .graphmodel import (DegreeSpec, FactorGraph, WeightFamily,
                         _parity_tensor)
from .rng import substream


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A named model: alphabet, degree specs, weight family, parameters."""

    name: str
    q: int
    dspec: DegreeSpec
    kspec: DegreeSpec
    family: WeightFamily
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.family.supports(self.kspec.support):
            raise ValueError("family arities must cover the arity spec")

    def with_dspec(self, dspec: DegreeSpec) -> "ModelSpec":
        return replace(self, dspec=dspec)


def _snap(c: float) -> float:
    # keep 1 +- c exactly reconstructible from the stored tables
    return (1.0 + c) - 1.0


def ldgm(eta: float, dspec: DegreeSpec, kspec: DegreeSpec) -> ModelSpec:
    """Noisy parity-check family: two tables 1 +- (1-2 eta) prod(spins).

    The label J = +1 table (index 0) rewards even parity; under the planted
    construction with ground truth sigma the label matches the parity of
    sigma on the factor with probability 1 - eta, which is exactly the
    binary symmetric channel acting on the codeword bits.
    """
    if not 0 < eta < 1:
        raise ValueError("flip probability must be in (0, 1)")
    c = _snap(1.0 - 2.0 * eta)
    tables = {}
    masses = {}
    labels = {}
    for k in kspec.support:
        par = _parity_tensor(k)
        tables[k] = (1.0 + c * par, 1.0 - c * par)
        masses[k] = np.array([0.5, 0.5])
        labels[k] = ("J=+1", "J=-1")
    family = WeightFamily(q=2, tables=tables, masses=masses, labels=labels)
    return ModelSpec(name="ldgm", q=2, dspec=dspec, kspec=kspec, family=family,
                     params={"eta": eta})


def ldgm_channel(g: FactorGraph, x, eta: float, seed: int) -> np.ndarray:
    """Push a message through the code graph and the binary symmetric channel.

    ``x`` is the message in bit form (spin indices).  Returns the observed
    bits y*: per-factor parity of the adjacent bits, each flipped
    independently with probability eta.  With the index convention the
    factor label array of a planted graph is exactly this bit vector, i.e.
    table index 0 where y* is 0.
    """
    x = np.asarray(x, dtype=np.int64)
    parity = np.array([sum(int(x[v]) for v in fv) % 2 for fv in g.factor_vars],
                      dtype=np.int64)
    rng = substream(seed, 90)
    flips = rng.random(g.m) < eta
    return (parity + flips.astype(np.int64)) % 2


def sbm(q: int, beta: float, d: int, *, assortative: bool = False) -> ModelSpec:
    """Regular two-colour-penalty model: one binary table exp(-beta [equal]).

    The assortative variant (exp(+beta [equal])) is constructible for the
    convexity falsifier but is not a valid input to the variational
    pipeline, which will reject it.
    """
    if q < 2 or d < 3 or beta < 0:
        raise ValueError("need q >= 2, d >= 3, beta >= 0")
    sign = 1.0 if assortative else -1.0
    table = np.exp(sign * beta * np.eye(q))
    family = WeightFamily(q=q, tables={2: (table,)}, masses={2: np.array([1.0])},
                          labels={2: ("same-colour" if assortative else "distinct-colour",)})
    name = "sbm-assortative" if assortative else "sbm"
    return ModelSpec(name=name, q=q, dspec=DegreeSpec.constant(d),
                     kspec=DegreeSpec.constant(2), family=family,
                     params={"q": q, "beta": beta, "d": d,
                             "assortative": assortative})


def potts(q: int, beta: float, d: int) -> ModelSpec:
    """Same tables as :func:`sbm`, aimed at the null model's free entropy.

    The quantity of interest is E[log Z] of the unplanted d-regular graph,
    which coincides with the annealed value exactly while the planted
    functional's supremum stays at the annealed value; the scanner therefore
    locates the null model's condensation point on the planted family.
    """
    spec = sbm(q, beta, d)
    return replace(spec, name="potts",
                   extras={"target": "null-model quenched free entropy"})


def _coupling_levels(r: int):
    """Symmetric 2 r^2-level discretisation of a standard Gaussian.

    Interval width 1/r on [-r, r]; negative intervals map to their left
    endpoint, positive ones to their right endpoint, tails clamp to -r and
    +r.  Returns (levels, masses) with exact mirror symmetry.
    """
    if r < 1:
        raise ValueError("discretisation level must be at least 1")
    levels = []
    masses = []
    for i in range(2 * r * r):
        lo = -r + i / r
        hi = -r + (i + 1) / r
        level = lo if i < r * r else hi
        mass = norm.cdf(hi) - norm.cdf(lo)
        if i == 0:
            mass += norm.cdf(-r)
        if i == 2 * r * r - 1:
            mass += norm.sf(r)
        levels.append(level)
        masses.append(mass)
    levels = np.asarray(levels)
    masses = np.asarray(masses)
    masses = masses / masses.sum()
    return levels, masses


def kspin(beta: float, kspec: DegreeSpec, r: int = 6, *,
          d: Optional[float] = None) -> ModelSpec:
    """Diluted mixed-interaction spin model with discretised couplings.

    Boltzmann factors exp(beta J prod(spins)) are stored in the normalised
    form 1 + tanh(beta J) prod(spins), which has unit marginal-sum constant
    and the same Boltzmann measure; the per-level log normalisers
    ln cosh(beta J) are kept so instance log Z maps back to the raw
    convention.  The variable degree is Poisson with mean ``d`` (truncated
    and renormalised), defaulting to E[k].
    """
    if beta <= 0:
        raise ValueError("inverse temperature must be positive")
    if 2 not in kspec.support:
        raise ValueError("the arity spec must put mass on pair interactions")
    levels, level_masses = _coupling_levels(r)
    tanh = np.array([_snap(math.tanh(beta * a)) for a in levels])
    tables = {}
    masses = {}
    labels = {}
    for k in kspec.support:
        par = _parity_tensor(k)
        tables[k] = tuple(1.0 + t * par for t in tanh)
        masses[k] = level_masses.copy()
        labels[k] = tuple(f"J={a:+.6g}" for a in levels)
    family = WeightFamily(q=2, tables=tables, masses=masses, labels=labels)
    mean_degree = float(d) if d is not None else kspec.mean
    dspec = DegreeSpec.poisson(mean_degree)
    return ModelSpec(name="kspin", q=2, dspec=dspec, kspec=kspec, family=family,
                     params={"beta": beta, "r": r, "d": mean_degree},
                     extras={"levels": levels, "level_masses": level_masses,
                             "log_cosh": np.log(np.cosh(beta * levels))})


def kspin_log_normalizer(model: ModelSpec, table_ids: Sequence[int]) -> float:
    """Sum of ln cosh(beta J) over a graph's factors: add to the normalised
    instance log Z to recover the raw Boltzmann convention."""
    log_cosh = model.extras["log_cosh"]
    return float(sum(log_cosh[i] for i in table_ids))


def lrc_threshold(beta: float, kspec: DegreeSpec, d_grid: Sequence[float], seed: int,
                  *, r: int = 6, restarts: int = 1, pop_size: int = 2000,
                  sweeps: int = 100, samples: int = 20_000):
    """Bracket the mean degree where pair correlations stop vanishing.

    Scans the degree grid and compares the functional's best value against
    ln 2; returns the scan result with a one-step bracket.
    """
    from .bethe import threshold_scan

    def family(d):
        return kspin(beta, kspec, r, d=d)

    return threshold_scan(family, d_grid, comparator=math.log(2.0), seed=seed,
                          restarts=restarts, pop_size=pop_size, sweeps=sweeps,
                          samples=samples)


MODELS = {
    "ldgm": ldgm,
    "sbm": sbm,
    "potts": potts,
    "kspin": kspin,
}


def build_model(name: str, **params) -> ModelSpec:
    """Build a registered model from flat keyword parameters.

    Degree parameters accept either DegreeSpec objects or plain numbers
    (constants); ``ldgm`` also accepts mappings {degree: mass}.
    """
    if name not in MODELS:
        raise ValueError(f"unknown model '{name}'; known: {sorted(MODELS)}")
    if name == "ldgm":
        dspec = _as_spec(params.pop("dspec"))
        kspec = _as_spec(params.pop("kspec"))
        return ldgm(params.pop("eta"), dspec, kspec, **params)
    if name in ("sbm", "potts"):
        return MODELS[name](int(params.pop("q")), float(params.pop("beta")),
                            int(params.pop("d")), **params)
    if name == "kspin":
        kspec = _as_spec(params.pop("kspec"))
        return kspin(float(params.pop("beta")), kspec, **params)
    raise AssertionError


def _as_spec(value) -> DegreeSpec:
    if isinstance(value, DegreeSpec):
        return value
    if isinstance(value, dict):
        return DegreeSpec.from_mapping(value)
    return DegreeSpec.constant(int(value))
