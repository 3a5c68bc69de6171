"""Exact desk-scale oracles: enumeration, sampling, and instance BP.

Everything here is brute force on purpose.  Partition functions and
marginals come from full state enumeration with log-domain accumulation;
ensemble expectations come from enumerating clone pairings; the sum-product
routine is a cross-check, not a performance path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import CapExceeded
from .graphmodel import (DegreeSequence, FactorGraph, WeightFamily,
                         sample_degree_sequence, sample_planted,
                         uniform_assignment)
from .rng import substream

STATE_CAP = 2 ** 24
SAMPLE_STATE_CAP = 2 ** 22
PAIRING_TERM_CAP = 10 ** 7
_CHUNK = 1 << 16


# ---------------------------------------------------------------------------
# state enumeration
# ---------------------------------------------------------------------------


@dataclass
class BoltzmannSummary:
    """log partition function, per-variable marginals, optional pair data."""

    log_z: float
    marginals: np.ndarray
    pair_joint: Optional[np.ndarray] = None            # (n, n, q, q)
    two_point: Optional[float] = None

    def pair_correlations(self) -> np.ndarray:
        """Per-pair q x q joint minus product of marginals (needs pair data)."""
        if self.pair_joint is None:
            raise ValueError("run the enumeration with want_pairs=True")
        prod = self.marginals[:, None, :, None] * self.marginals[None, :, None, :]
        return self.pair_joint - prod


def assignment_log_weight(g: FactorGraph, sigma) -> float:
    """log of the graph weight of one assignment; -inf if a pin is violated."""
    sigma = np.asarray(sigma, dtype=np.int64)
    for v, s in g.pins:
        if sigma[v] != s:
            return -math.inf
    total = 0.0
    for j in range(g.m):
        total += math.log(float(g.factor_table(j)[tuple(sigma[v] for v in g.factor_vars[j])]))
    return total


def _check_state_cap(g: FactorGraph, cap: int):
    n_states = g.q ** g.n
    if n_states > cap:
        raise CapExceeded("state enumeration", n_states, cap)
    return n_states


def _state_digits(q: int, n: int, start: int, stop: int) -> np.ndarray:
    """Rows start..stop of the lexicographic assignment table, shape (b, n)."""
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((len(idx), n), dtype=np.int64)
    for v in range(n):
        digits[:, v] = (idx // q ** (n - 1 - v)) % q
    return digits


def _chunk_log_weights(g: FactorGraph, digits: np.ndarray) -> np.ndarray:
    logw = np.zeros(len(digits))
    q = g.q
    for j in range(g.m):
        fv = g.factor_vars[j]
        k = len(fv)
        flat = np.zeros(len(digits), dtype=np.int64)
        for s, v in enumerate(fv):
            flat = flat * q + digits[:, v]
        logw += np.log(g.factor_table(j).ravel()[flat])
    for v, s in g.pins:
        logw = np.where(digits[:, v] == s, logw, -np.inf)
    return logw


def partition_function(g: FactorGraph, *, cap: int = STATE_CAP,
                       want_pairs: bool = False) -> BoltzmannSummary:
    """Exact log Z and marginals by full enumeration.

    With ``want_pairs`` also accumulates all pairwise joint marginals and the
    averaged total-variation correlation scalar.
    """
    n_states = _check_state_cap(g, cap)
    n, q = g.n, g.q

    # pass 1: streaming log-sum-exp
    running_max = -np.inf
    running_sum = 0.0
    for start in range(0, n_states, _CHUNK):
        digits = _state_digits(q, n, start, min(start + _CHUNK, n_states))
        logw = _chunk_log_weights(g, digits)
        m = float(logw.max()) if len(logw) else -np.inf
        if m > running_max:
            running_sum *= math.exp(running_max - m) if running_max > -np.inf else 0.0
            running_max = m
        if running_max > -np.inf:
            running_sum += float(np.exp(logw - running_max).sum())
    if running_max == -np.inf or running_sum <= 0.0:
        raise ValueError("graph weight vanishes on every assignment (conflicting pins)")
    log_z = running_max + math.log(running_sum)

    # pass 2: marginals (and pair joints)
    marg = np.zeros((n, q))
    joint = np.zeros((n, n, q, q)) if want_pairs else None
    for start in range(0, n_states, _CHUNK):
        digits = _state_digits(q, n, start, min(start + _CHUNK, n_states))
        w = np.exp(_chunk_log_weights(g, digits) - log_z)
        for v in range(n):
            np.add.at(marg[v], digits[:, v], w)
        if want_pairs:
            for x in range(n):
                for y in range(n):
                    np.add.at(joint[x, y], (digits[:, x], digits[:, y]), w)

    tp = None
    if want_pairs:
        tp = _two_point_from_joint(joint, marg)
    return BoltzmannSummary(log_z=log_z, marginals=marg, pair_joint=joint, two_point=tp)


def _two_point_from_joint(joint: np.ndarray, marg: np.ndarray) -> float:
    # distinct pairs only, so a product measure scores exactly zero; the
    # normalisation stays 1/n^2
    n, q = marg.shape
    prod = marg[:, None, :, None] * marg[None, :, None, :]
    dev = np.abs(joint - prod)
    if q == 2:
        val = dev[:, :, 0, 0].copy()
    else:
        val = dev.reshape(n, n, q * q).max(axis=2)
    np.fill_diagonal(val, 0.0)
    return float(val.sum() / n ** 2)


def two_point(g: FactorGraph, *, cap: int = STATE_CAP) -> float:
    """Averaged absolute pair-correlation of the Boltzmann distribution.

    For q = 2 this is the mean over ordered pairs (x, y), diagonal included,
    of |mu(s_x = s_y = +1) - mu(s_x = +1) mu(s_y = +1)|; for larger alphabets
    the worst spin pair is taken at every (x, y).
    """
    return float(partition_function(g, cap=cap, want_pairs=True).two_point)


def boltzmann_sample(g: FactorGraph, count: int, seed: int,
                     *, cap: int = SAMPLE_STATE_CAP) -> np.ndarray:
    """Exact inverse-CDF samples from the Boltzmann distribution, (count, n)."""
    n_states = _check_state_cap(g, cap)
    n, q = g.n, g.q
    logw = np.concatenate([
        _chunk_log_weights(g, _state_digits(q, n, s, min(s + _CHUNK, n_states)))
        for s in range(0, n_states, _CHUNK)
    ])
    log_z = float(logsumexp(logw))
    probs = np.exp(logw - log_z)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    rng = substream(seed, 30)
    picks = np.searchsorted(cdf, rng.random(count), side="right")
    out = np.empty((count, n), dtype=np.int64)
    for v in range(n):
        out[:, v] = (picks // q ** (n - 1 - v)) % q
    return out


# ---------------------------------------------------------------------------
# ensemble enumeration
# ---------------------------------------------------------------------------


def iter_slot_maps(seq: DegreeSequence, *, cap: int = PAIRING_TERM_CAP):
    """All slot -> variable maps of a uniform clone pairing, with probability.

    Yields (per-factor variable tuples, probability).  The probability of a
    map assigning c_v slots to variable v is prod_v (d_v)_{c_v} / (T)_{S}
    where T is the total variable degree and S the total factor degree.
    """
    d = list(seq.var_degrees)
    arities = list(seq.factor_arities)
    slots = [(j, s) for j, k in enumerate(arities) for s in range(k)]
    total = seq.total_var_degree
    emitted = 0

    def rec(i, remaining, free, prob, current):
        nonlocal emitted
        if i == len(slots):
            emitted += 1
            if emitted > cap:
                raise CapExceeded("pairing enumeration", emitted, cap)
            fixed = []
            pos = 0
            for k in arities:
                fixed.append(tuple(current[pos:pos + k]))
                pos += k
            yield tuple(fixed), prob
            return
        for v in range(len(d)):
            if remaining[v] == 0:
                continue
            remaining[v] -= 1
            current.append(v)
            yield from rec(i + 1, remaining, free - 1,
                           prob * (remaining[v] + 1) / free, current)
            current.pop()
            remaining[v] += 1

    yield from rec(0, list(d), total, 1.0, [])


def expected_weight(seq: DegreeSequence, family: WeightFamily, sigma,
                    *, cap: int = PAIRING_TERM_CAP) -> float:
    """Expected graph weight of ``sigma`` over pairings and weight choices.

    Uses the colour-count factorisation: the weight of a pairing depends on
    slot colours only, so a dynamic programme over per-factor colour-count
    transitions replaces the raw sum over clone matchings.
    """
    sigma = np.asarray(sigma, dtype=np.int64)
    q = family.q
    d = np.asarray(seq.var_degrees)
    h = np.bincount(sigma, weights=d, minlength=q).astype(np.int64)
    total = seq.total_var_degree
    s_total = seq.total_factor_degree

    states = {(0,) * q: 1.0}
    for k in seq.factor_arities:
        mean_flat = family.mean_table(k).ravel()
        tuples = list(np.ndindex(*(q,) * k))
        new_states = {}
        if len(states) * len(tuples) > cap:
            raise CapExceeded("colour-count dynamic programme",
                              len(states) * len(tuples), cap)
        for state, acc in states.items():
            for flat, tup in enumerate(tuples):
                nxt = list(state)
                ok = True
                for w in tup:
                    nxt[w] += 1
                    if nxt[w] > h[w]:
                        ok = False
                        break
                if ok:
                    key = tuple(nxt)
                    new_states[key] = new_states.get(key, 0.0) + acc * mean_flat[flat]
        states = new_states

    out = 0.0
    for state, acc in states.items():
        weight = 1.0
        for w in range(q):
            for t in range(state[w]):
                weight *= (h[w] - t)
        out += acc * weight
    denom = 1.0
    for t in range(s_total):
        denom *= (total - t)
    return out / denom


def expected_partition(seq: DegreeSequence, family: WeightFamily,
                       *, cap: int = PAIRING_TERM_CAP) -> float:
    """E[Z | degree sequence] by slot-map enumeration (pins absent)."""
    q = family.q
    total = 0.0
    for slot_map, prob in iter_slot_maps(seq, cap=cap):
        z = 0.0
        for sigma in np.ndindex(*(q,) * seq.n):
            w = 1.0
            for fv, k in zip(slot_map, seq.factor_arities):
                w *= float(family.mean_table(k)[tuple(sigma[v] for v in fv)])
            z += w
        total += prob * z
    return total


def nishimori_check(n: int, dspec, kspec, family: WeightFamily, tol: float,
                    *, seed: int = 0, cap: int = PAIRING_TERM_CAP) -> float:
    """Termwise check of the tilted-pair identity on one degree sequence.

    For every labelled graph G (slot map plus weight choices) and assignment
    sigma it compares

        P[Z-tilted graph = G] mu_G(sigma)
        ==  P[tilted assignment = sigma] P[planted graph = G | sigma]

    and returns the maximum absolute difference.  Passes iff <= tol.
    """
    seq = sample_degree_sequence(n, dspec, kspec, seed)
    if seq.n > 4 or seq.total_var_degree > 10:
        raise CapExceeded("nishimori enumeration",
                          seq.total_var_degree, 10)
    q = family.q
    graphs = []          # (factor_vars, table_ids, P[G|D], psi_G per sigma)
    assignments = list(np.ndindex(*(q,) * n))
    for slot_map, prob in iter_slot_maps(seq, cap=cap):
        table_choices = [range(family.n_tables(k)) for k in seq.factor_arities]
        for ids in itertools.product(*table_choices):
            p_g = prob
            for k, i in zip(seq.factor_arities, ids):
                p_g *= float(family.masses[k][i])
            psi = np.empty(len(assignments))
            for s_idx, sigma in enumerate(assignments):
                w = 1.0
                for fv, k, i in zip(slot_map, seq.factor_arities, ids):
                    w *= float(family.table(k, i)[tuple(sigma[v] for v in fv)])
                psi[s_idx] = w
            graphs.append((slot_map, ids, p_g, psi))

    z_per_graph = np.array([g[3].sum() for g in graphs])
    p_null = np.array([g[2] for g in graphs])
    mean_z = float(np.dot(p_null, z_per_graph))

    # expected weight per assignment, E[psi_G(sigma) | D]
    e_psi = np.zeros(len(assignments))
    for (_, _, p_g, psi) in graphs:
        e_psi += p_g * psi
    sum_e_psi = float(e_psi.sum())

    worst = 0.0
    for g_idx, (_, _, p_g, psi) in enumerate(graphs):
        z_g = z_per_graph[g_idx]
        lhs = (z_g * p_g / mean_z) * (psi / z_g)
        rhs = (e_psi / sum_e_psi) * (p_g * psi / e_psi)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


# ---------------------------------------------------------------------------
# planted-law oracles
# ---------------------------------------------------------------------------


def planted_law_reweighting(seq: DegreeSequence, sigma, family: WeightFamily,
                            *, cap: int = PAIRING_TERM_CAP) -> dict:
    """The defining law of the teacher-student graph: null times weight.

    Returns {(slot_map, table_ids): probability} with mass proportional to
    P[G | degrees] * psi_G(sigma).
    """
    sigma = np.asarray(sigma, dtype=np.int64)
    law = {}
    for slot_map, prob in iter_slot_maps(seq, cap=cap):
        table_choices = [range(family.n_tables(k)) for k in seq.factor_arities]
        for ids in itertools.product(*table_choices):
            p = prob
            for fv, k, i in zip(slot_map, seq.factor_arities, ids):
                p *= float(family.masses[k][i])
                p *= float(family.table(k, i)[tuple(sigma[v] for v in fv)])
            law[(slot_map, ids)] = law.get((slot_map, ids), 0.0) + p
    total = sum(law.values())
    return {key: p / total for key, p in law.items()}


def planted_law_construction(seq: DegreeSequence, sigma, family: WeightFamily) -> dict:
    """Exact output law of the three-stage planted sampler.

    Enumerates every colouring of the factor-side positions (real slots plus
    cavity pebbles), every clone bijection, and every weight choice, with the
    stage-wise probabilities of the construction.  Feasible only at toy sizes.
    """
    sigma = np.asarray(sigma, dtype=np.int64)
    q = family.q
    d = list(seq.var_degrees)
    arities = list(seq.factor_arities)
    total = seq.total_var_degree
    delta = seq.cavity_count

    owners = [v for v in range(len(d)) for _ in range(d[v])]
    chi = [int(sigma[v]) for v in owners]
    target = [0] * q
    for c in chi:
        target[c] += 1

    laws = {k: (family.mean_table(k).ravel() / family.table_total(k)) for k in set(arities)}

    # stage-1 law over position colourings, conditioned on the histogram
    y_law = {}
    for y in itertools.product(range(q), repeat=total):
        hist = [0] * q
        for c in y:
            hist[c] += 1
        if hist != target:
            continue
        p = q ** (-delta) if delta else 1.0
        pos = 0
        for k in arities:
            flat = 0
            for s in range(k):
                flat = flat * q + y[pos + s]
            p *= float(laws[k][flat])
            pos += k
        y_law[y] = p
    total_mass = sum(y_law.values())
    y_law = {y: p / total_mass for y, p in y_law.items()}

    law = {}
    clones = list(range(total))
    for y, p_y in y_law.items():
        counts = [0] * q
        for c in y:
            counts[c] += 1
        p_bij = 1.0
        for c in range(q):
            p_bij /= math.factorial(counts[c])
        # stage-2 table law per factor given its colours
        pos = 0
        table_laws = []
        for j, k in enumerate(arities):
            flat = 0
            for s in range(k):
                flat = flat * q + y[pos + s]
            vals = np.array([t.ravel()[flat] for t in family.tables[k]])
            pr = family.masses[k] * vals
            table_laws.append(pr / pr.sum())
            pos += k
        for perm in itertools.permutations(clones):
            # perm maps position -> clone; colour-consistency required
            if any(chi[perm[p]] != y[p] for p in range(total)):
                continue
            slot_map = []
            pos = 0
            for k in arities:
                slot_map.append(tuple(owners[perm[p]] for p in range(pos, pos + k)))
                pos += k
            slot_map = tuple(slot_map)
            for ids in itertools.product(*[range(len(t)) for t in table_laws]):
                p = p_y * p_bij
                for j, i in enumerate(ids):
                    p *= float(table_laws[j][i])
                key = (slot_map, ids)
                law[key] = law.get(key, 0.0) + p
    return law


# ---------------------------------------------------------------------------
# mutual information and KL estimators
# ---------------------------------------------------------------------------


def information_term(family: WeightFamily, kspec) -> float:
    """E[q^{-k} sum_tau Lambda(psi(tau))] over the arity and table choice."""
    out = 0.0
    for k, pk in zip(kspec.support, kspec.mass):
        if pk == 0:
            continue
        inner = 0.0
        for t, mass in zip(family.tables[k], family.masses[k]):
            vals = t.ravel()
            inner += mass * float(np.dot(vals, np.log(vals))) / family.q ** k
        out += pk * inner
    return out


class MIMonteCarlo(NamedTuple):
    value: float
    stderr: float


def _planted_log_z_samples(model, n: int, graphs: int, seed: int,
                           *, cap: int = STATE_CAP) -> np.ndarray:
    seq = sample_degree_sequence(n, model.dspec, model.kspec, seed)
    out = np.empty(graphs)
    for i in range(graphs):
        rng = substream(seed, 40, i)
        sigma = uniform_assignment(n, model.q, rng)
        g = sample_planted(seq, sigma, model.family, 0, int(rng.integers(2 ** 62)))
        out[i] = partition_function(g, cap=cap).log_z
    return out


def mi_monte_carlo(model, n: int, graphs: int, seed: int,
                   *, cap: int = STATE_CAP) -> MIMonteCarlo:
    """Finite-size mutual information per variable, with Monte-Carlo error.

    ln q plus the exact information term, minus the sampled mean of
    log Z(planted graph)/n on one degree sequence.  The systematic
    finite-size gap is not included in the reported standard error.
    """
    log_zs = _planted_log_z_samples(model, n, graphs, seed, cap=cap)
    xi = model.family.xi()
    info = information_term(model.family, model.kspec)
    coeff = model.dspec.mean / (xi * model.kspec.mean)
    value = math.log(model.q) + coeff * info - float(log_zs.mean()) / n
    stderr = float(log_zs.std(ddof=1)) / math.sqrt(graphs) / n if graphs > 1 else math.inf
    return MIMonteCarlo(value, stderr)


def kl_density(model, n: int, graphs: int, seed: int, *, cap: int = STATE_CAP,
               with_stderr: bool = False):
    """Leading term of KL(planted || null)/n: quenched minus annealed.

    Estimates E[log Z(planted)]/n by exact log Z over sampled planted graphs
    and subtracts the annealed free entropy density.
    """
    from .bethe import annealed_free_entropy

    log_zs = _planted_log_z_samples(model, n, graphs, seed, cap=cap)
    phi_star = float(log_zs.mean()) / n
    value = phi_star - annealed_free_entropy(model)
    if with_stderr:
        stderr = float(log_zs.std(ddof=1)) / math.sqrt(graphs) / n if graphs > 1 else math.inf
        return value, stderr
    return value


# ---------------------------------------------------------------------------
# instance belief propagation
# ---------------------------------------------------------------------------


@dataclass
class BPState:
    """Directed messages on clone-level edges plus convergence bookkeeping."""

    graph: FactorGraph
    var_to_fac: np.ndarray       # (E, q)
    fac_to_var: np.ndarray       # (E, q)
    iterations: int
    max_change: float
    converged: bool


def _edge_index(g: FactorGraph):
    edge_var = []
    edges_of_factor = []
    e = 0
    for j in range(g.m):
        ids = []
        for v in g.factor_vars[j]:
            edge_var.append(v)
            ids.append(e)
            e += 1
        edges_of_factor.append(ids)
    edges_of_var = [[] for _ in range(g.n)]
    for e, v in enumerate(edge_var):
        edges_of_var[v].append(e)
    return np.asarray(edge_var), edges_of_factor, edges_of_var


def _pin_fields(g: FactorGraph) -> np.ndarray:
    fields = np.ones((g.n, g.q))
    for v, s in g.pins:
        mask = np.zeros(g.q)
        mask[s] = 1.0
        fields[v] *= mask
    if np.any(fields.sum(axis=1) == 0):
        raise ValueError("conflicting pins leave a variable with no spin")
    return fields


def bp_run(g: FactorGraph, max_iters: int = 1000, damping: float = 0.5,
           tol: float = 1e-10) -> BPState:
    """Synchronous damped sum-product sweeps.

    Messages live on (variable clone, factor clone) pairs, so parallel edges
    carry independent messages.  Pins act as hard unary fields on the
    variable side.  Non-convergence is reported on the returned state, not
    raised.
    """
    if not 0 <= damping < 1:
        raise ValueError("damping must be in [0, 1)")
    edge_var, edges_of_factor, edges_of_var = _edge_index(g)
    n_edges = len(edge_var)
    q = g.q
    fields = _pin_fields(g)

    v2f = np.full((n_edges, q), 1.0 / q)
    f2v = np.full((n_edges, q), 1.0 / q)

    change = np.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        # factor -> variable
        new_f2v = np.empty_like(f2v)
        for j in range(g.m):
            ids = edges_of_factor[j]
            k = len(ids)
            table = g.factor_table(j)
            incoming = [v2f[e] for e in ids]
            for s in range(k):
                tmp = table
                for t in range(k - 1, -1, -1):
                    if t == s:
                        continue
                    tmp = np.tensordot(tmp, incoming[t], axes=([t], [0]))
                tmp = np.clip(tmp, 0.0, None)
                new_f2v[ids[s]] = tmp / tmp.sum()

        # variable -> factor, leave-one-out products with the pin field
        new_v2f = np.empty_like(v2f)
        for v in range(g.n):
            ids = edges_of_var[v]
            if not ids:
                continue
            msgs = [new_f2v[e] for e in ids]
            prefix = [fields[v]]
            for msg in msgs:
                prefix.append(prefix[-1] * msg)
            suffix = [np.ones(q)]
            for msg in reversed(msgs):
                suffix.append(suffix[-1] * msg)
            suffix.reverse()
            for i, e in enumerate(ids):
                out = prefix[i] * suffix[i + 1]
                total = out.sum()
                if total <= 0:
                    raise ValueError("message normaliser vanished")
                new_v2f[e] = out / total

        f2v_next = damping * f2v + (1 - damping) * new_f2v
        v2f_next = damping * v2f + (1 - damping) * new_v2f
        change = max(
            float(np.abs(f2v_next - f2v).max()) if n_edges else 0.0,
            float(np.abs(v2f_next - v2f).max()) if n_edges else 0.0,
        )
        f2v, v2f = f2v_next, v2f_next
        if change < tol:
            return BPState(g, v2f, f2v, iters, change, True)
    return BPState(g, v2f, f2v, iters, change, False)


def bp_marginals(state: BPState) -> np.ndarray:
    g = state.graph
    _, _, edges_of_var = _edge_index(g)
    fields = _pin_fields(g)
    out = np.empty((g.n, g.q))
    for v in range(g.n):
        belief = fields[v].copy()
        for e in edges_of_var[v]:
            belief *= state.fac_to_var[e]
        out[v] = belief / belief.sum()
    return out


def bethe_instance(state: BPState) -> float:
    """Instance Bethe free entropy at the current messages.

    Variable, factor and edge terms; exact log Z when the graph is a tree
    and the messages are at the fixed point.
    """
    g = state.graph
    edge_var, edges_of_factor, edges_of_var = _edge_index(g)
    fields = _pin_fields(g)
    total = 0.0
    for j in range(g.m):
        ids = edges_of_factor[j]
        tmp = g.factor_table(j)
        for t in range(len(ids) - 1, -1, -1):
            tmp = np.tensordot(tmp, state.var_to_fac[ids[t]], axes=([t], [0]))
        total += math.log(float(tmp))
    for v in range(g.n):
        belief = fields[v].copy()
        for e in edges_of_var[v]:
            belief *= state.fac_to_var[e]
        total += math.log(float(belief.sum()))
    for e in range(len(edge_var)):
        total -= math.log(float(np.dot(state.fac_to_var[e], state.var_to_fac[e])))
    return total
