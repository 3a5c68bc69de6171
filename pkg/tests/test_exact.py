import math

import numpy as np
import pytest
from scipy.stats import chi2

from factorcavity import exact, models
from factorcavity.errors import CapExceeded
from factorcavity.graphmodel import (DegreeSequence, DegreeSpec, FactorGraph,
                                     WeightFamily, pin, sample_degree_sequence,
                                     sample_null)

D2 = DegreeSpec.constant(2)
K2 = DegreeSpec.constant(2)


def _empty_graph(n, q=2):
    fam = WeightFamily.constant(q, [2])
    return FactorGraph(family=fam, var_degrees=(0,) * n, factor_vars=(),
                       factor_tables=())


def _tensor_oracle_log_z(g):
    """Independent evaluation: dense joint tensor, then axiswise elimination."""
    q = g.q
    grids = np.meshgrid(*[np.arange(q)] * g.n, indexing="ij")
    joint = np.ones((q,) * g.n)
    for j in range(g.m):
        table = g.factor_table(j)
        joint = joint * table[tuple(grids[v] for v in g.factor_vars[j])]
    for v, s in g.pins:
        joint = joint * (grids[v] == s)
    while joint.ndim:
        joint = joint.sum(axis=-1)
    return math.log(float(joint))


# ---------------------------------------------------------------------------
# partition function
# ---------------------------------------------------------------------------


def test_zero_factor_graph():
    g = _empty_graph(5)
    summary = exact.partition_function(g)
    assert summary.log_z == pytest.approx(5 * math.log(2), abs=1e-12)
    assert np.allclose(summary.marginals, 0.5)


def test_single_constant_factor():
    fam = WeightFamily.constant(2, [2], value=0.7)
    g = FactorGraph(family=fam, var_degrees=(1, 1), factor_vars=((0, 1),),
                    factor_tables=(0,))
    assert exact.partition_function(g).log_z == pytest.approx(math.log(4 * 0.7), abs=1e-12)


def test_log_z_matches_tensor_oracle():
    model = models.ldgm(0.2, D2, K2)
    g = sample_null(10, D2, K2, model.family, seed=42)
    assert exact.partition_function(g).log_z == pytest.approx(
        _tensor_oracle_log_z(g), abs=1e-9)


def test_state_cap():
    g = _empty_graph(30)
    with pytest.raises(CapExceeded):
        exact.partition_function(g, cap=2 ** 20)


def test_log_z_additive_over_components():
    fam = models.sbm(2, 0.8, 3).family
    g1 = sample_null(4, D2, K2, fam, seed=0)
    g2 = sample_null(3, D2, K2, fam, seed=1)
    merged = FactorGraph(
        family=fam,
        var_degrees=g1.var_degrees + g2.var_degrees,
        factor_vars=g1.factor_vars + tuple(tuple(v + g1.n for v in fv)
                                           for fv in g2.factor_vars),
        factor_tables=g1.factor_tables + g2.factor_tables)
    assert exact.partition_function(merged).log_z == pytest.approx(
        exact.partition_function(g1).log_z + exact.partition_function(g2).log_z,
        abs=1e-10)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_boltzmann_uniform_chi_square():
    g = _empty_graph(3)
    draws = exact.boltzmann_sample(g, 100_000, seed=0)
    idx = draws[:, 0] * 4 + draws[:, 1] * 2 + draws[:, 2]
    counts = np.bincount(idx, minlength=8)
    expected = len(draws) / 8
    stat = float(((counts - expected) ** 2 / expected).sum())
    # 4-sigma two-sided band on a chi-square with 7 dof
    assert stat < chi2.ppf(1 - 3.17e-5, df=7)


def test_fully_pinned_sampling():
    fam = models.sbm(2, 0.8, 3).family
    g = sample_null(4, D2, K2, fam, seed=2)
    pinned = pin(g, 4, seed=3)
    pattern = np.array([s for _, s in pinned.pins])
    draws = exact.boltzmann_sample(pinned, 50, seed=4)
    assert (draws == pattern).all()


def test_boltzmann_marginals_sbm():
    fam = models.sbm(2, 1.2, 3).family
    g = sample_null(8, DegreeSpec.constant(3), K2, fam, seed=5)
    summary = exact.partition_function(g)
    draws = exact.boltzmann_sample(g, 100_000, seed=6)
    for v in range(8):
        emp = np.mean(draws[:, v] == 0)
        p = summary.marginals[v, 0]
        assert abs(emp - p) <= 4 * math.sqrt(p * (1 - p) / len(draws))


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------


def test_two_point_product_measure():
    assert exact.two_point(_empty_graph(4)) == 0.0


def test_two_point_two_variable_hand_value():
    eps = 0.3
    table = np.array([[1 + eps, eps], [eps, 1 + eps]])
    fam = WeightFamily(q=2, tables={2: (table,)}, masses={2: np.array([1.0])})
    g = FactorGraph(family=fam, var_degrees=(1, 1), factor_vars=((0, 1),),
                    factor_tables=(0,))
    z = 2 * (1 + eps) + 2 * eps
    joint_00 = (1 + eps) / z
    marg = 0.5
    off = abs(joint_00 - marg * marg)
    expected = 2 * off / 4.0
    assert expected > 0
    assert exact.two_point(g) == pytest.approx(expected, abs=1e-12)


def test_pair_correlations_field():
    fam = models.sbm(2, 1.0, 3).family
    g = sample_null(4, D2, K2, fam, seed=3)
    summary = exact.partition_function(g, want_pairs=True)
    corr = summary.pair_correlations()
    assert corr.shape == (4, 4, 2, 2)
    # each pair block sums to zero: joint and product share the marginals
    assert np.abs(corr.sum(axis=(2, 3))).max() < 1e-12
    with pytest.raises(ValueError):
        exact.partition_function(g).pair_correlations()


def test_two_point_weak_coupling_vanishes():
    model = models.kspin(1e-6, DegreeSpec.constant(2), r=2, d=2.0)
    g = sample_null(6, D2, K2, model.family, seed=7)
    assert exact.two_point(g) <= 1e-6


# ---------------------------------------------------------------------------
# ensemble expectations
# ---------------------------------------------------------------------------


def test_expected_weight_constant_family():
    fam = WeightFamily.constant(2, [2])
    seq = DegreeSequence((2, 2), (2, 2))
    assert exact.expected_weight(seq, fam, np.array([0, 1])) == pytest.approx(1.0, abs=1e-14)


def test_expected_weight_single_factor():
    model = models.sbm(2, 0.9, 3)
    fam = model.family
    seq = DegreeSequence((1, 1), (2,))
    sigma = np.array([0, 1])
    assert exact.expected_weight(seq, fam, sigma) == pytest.approx(
        float(fam.mean_table(2)[0, 1]), abs=1e-14)


def test_expected_weight_matches_slot_map_sum():
    fam = models.sbm(2, 0.9, 3).family
    seq = DegreeSequence((2, 2, 2), (2, 2, 2))
    sigma = np.array([0, 1, 1])
    direct = exact.expected_weight(seq, fam, sigma)
    total = 0.0
    for slot_map, prob in exact.iter_slot_maps(seq):
        w = 1.0
        for fv in slot_map:
            w *= float(fam.mean_table(2)[tuple(sigma[v] for v in fv)])
        total += prob * w
    assert direct == pytest.approx(total, abs=1e-12)


def test_nishimori_check_constant_family():
    fam = WeightFamily.constant(2, [2], value=2.0)
    assert exact.nishimori_check(3, D2, K2, fam, 1e-12) <= 1e-14


# ---------------------------------------------------------------------------
# information estimators
# ---------------------------------------------------------------------------


def test_mi_useless_channel_vanishes():
    model = models.ldgm(0.5, D2, K2)
    mc = exact.mi_monte_carlo(model, 8, 50, seed=0)
    assert abs(mc.value) <= max(3 * mc.stderr, 1e-10)


def test_mi_constant_weights_vanishes():
    fam = WeightFamily(q=2, tables={2: (np.full((2, 2), 1.7),)},
                       masses={2: np.array([1.0])})
    model = models.ModelSpec(name="flat", q=2, dspec=D2, kspec=K2, family=fam)
    mc = exact.mi_monte_carlo(model, 6, 40, seed=1)
    assert abs(mc.value) <= max(3 * mc.stderr, 1e-10)


def test_mi_invariant_under_relabeling():
    model = models.ldgm(0.3, D2, K2)
    flipped = models.ModelSpec(name="ldgm-flip", q=2, dspec=D2, kspec=K2,
                               family=model.family.permuted_alphabet([1, 0]))
    a = exact.mi_monte_carlo(model, 8, 60, seed=3)
    b = exact.mi_monte_carlo(flipped, 8, 60, seed=3)
    assert a.value == pytest.approx(b.value, abs=1e-12)


def test_kl_density_zero_at_beta_zero():
    model = models.sbm(2, 0.0, 3)
    assert exact.kl_density(model, 6, 20, seed=0) == pytest.approx(0.0, abs=1e-12)


def test_kl_density_constant_weights_zero():
    fam = WeightFamily(q=2, tables={2: (np.full((2, 2), 1.3),)},
                       masses={2: np.array([1.0])})
    model = models.ModelSpec(name="flat", q=2, dspec=D2, kspec=K2, family=fam)
    assert exact.kl_density(model, 6, 20, seed=0) == pytest.approx(0.0, abs=1e-12)


def test_kl_density_plus_assignment_term_positive():
    # The reported number is the leading term of the divergence density; at
    # desk sizes the dropped assignment term dominates it, so positivity is
    # checked on the full finite-size decomposition.
    model = models.sbm(2, 3.0, 3)
    n = 12
    seq = sample_degree_sequence(n, model.dspec, model.kspec, 1)
    w = np.array([exact.expected_weight(seq, model.family, np.array(s))
                  for s in np.ndindex(*(2,) * n)])
    phat = w / w.sum()
    assignment_term = float(np.mean(-n * math.log(2) - np.log(phat))) / n
    leading, stderr = exact.kl_density(model, n, 120, seed=1, with_stderr=True)
    assert leading + assignment_term > 3 * stderr


# ---------------------------------------------------------------------------
# belief propagation
# ---------------------------------------------------------------------------


def test_bp_zero_factor_graph():
    g = _empty_graph(4)
    state = exact.bp_run(g)
    assert state.converged
    assert np.allclose(exact.bp_marginals(state), 0.25 + np.zeros((4, 2)) + 0.25)
    assert exact.bethe_instance(state) == pytest.approx(4 * math.log(2), abs=1e-12)


def test_bp_single_cycle_weak_coupling():
    # 4-cycle with entries within 10% of 1
    table = np.array([[1.08, 0.94], [0.94, 1.08]])
    fam = WeightFamily(q=2, tables={2: (table,)}, masses={2: np.array([1.0])})
    g = FactorGraph(family=fam, var_degrees=(2, 2, 2, 2),
                    factor_vars=((0, 1), (1, 2), (2, 3), (3, 0)),
                    factor_tables=(0,) * 4)
    state = exact.bp_run(g, max_iters=2000, damping=0.2, tol=1e-12)
    assert state.converged
    summary = exact.partition_function(g)
    assert np.abs(exact.bp_marginals(state) - summary.marginals).max() <= 1e-6


def test_bp_pinned_tree_is_exact():
    fam = models.sbm(2, 0.9, 3).family
    g = FactorGraph(family=fam, var_degrees=(1, 2, 1),
                    factor_vars=((0, 1), (1, 2)), factor_tables=(0, 0),
                    pins=((0, 1),))
    state = exact.bp_run(g, damping=0.0, tol=1e-13)
    summary = exact.partition_function(g)
    assert np.abs(exact.bp_marginals(state) - summary.marginals).max() <= 1e-10
    assert exact.bethe_instance(state) == pytest.approx(summary.log_z, abs=1e-10)


def test_bp_reports_non_convergence():
    # pinned frustrated triangle, no damping, unreachable tolerance: the
    # state carries the verdict rather than raising
    table = np.exp(-3.0 * np.eye(2))
    fam = WeightFamily(q=2, tables={2: (table,)}, masses={2: np.array([1.0])})
    g = FactorGraph(family=fam, var_degrees=(2, 2, 2),
                    factor_vars=((0, 1), (1, 2), (2, 0)),
                    factor_tables=(0,) * 3, pins=((0, 0),))
    state = exact.bp_run(g, max_iters=3, damping=0.0, tol=1e-15)
    assert not state.converged
    assert state.iterations == 3
    assert state.max_change > 1e-15
