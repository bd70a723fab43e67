from __future__ import annotations

import numpy as np

from hsepm.distributions import RngStream, crt_many
from hsepm.graph_prior import (
    GraphPrior,
    HierarchyState,
    link_rates,
    sample_graph_indicators,
    sample_graph_weights,
    sample_hier_core,
    sample_hier_hypers,
    sample_hier_memberships,
    sample_hierarchy_counts,
    sample_transition_ghsepm,
    v_exposure,
    z_posterior_prob,
)


def se_ok(x, expected, k=3.0):
    x = np.asarray(x)
    return abs(x.mean() - expected) <= k * x.std(ddof=1) / np.sqrt(x.shape[0])


def hier_state(K=3, D=2, scale=1.0):
    return HierarchyState(
        m=np.full((K, D), scale), v=np.ones((D, D)), lam=np.ones(D), a=np.ones(K), c=np.ones(K)
    )


def test_alpha_is_z_times_w():
    gp = GraphPrior(np.array([[1, 0], [1, 1]]), np.array([[2.0, 3.0], [4.0, 5.0]]))
    assert np.array_equal(gp.alpha, [[2.0, 0.0], [4.0, 5.0]])


def test_transition_support():
    gp = GraphPrior(np.array([[1, 0, 1], [1, 1, 0], [1, 1, 1]]), np.ones((3, 3)))
    L = np.zeros((3, 3))
    L[1, 2] = 4
    pi = sample_transition_ghsepm(gp, L, RngStream(0))
    assert np.allclose(pi.sum(axis=0), 1.0, atol=1e-12)
    assert pi[0, 1] == 0.0
    # data overrides prior sparsity
    assert pi[1, 2] > 0


def test_transition_prior_mean():
    w = np.array([[1.0, 2.0], [3.0, 1.0]])
    gp = GraphPrior(np.ones((2, 2), dtype=np.int64), w)
    draws = np.array([sample_transition_ghsepm(gp, np.zeros((2, 2)), RngStream(s))[0, 0] for s in range(20000)])
    assert se_ok(draws, 0.25)


def test_dead_column_falls_back(caplog):
    gp = GraphPrior(np.array([[1, 0], [0, 0]]), np.ones((2, 2)))
    pi = sample_transition_ghsepm(gp, np.zeros((2, 2)), RngStream(1))
    assert np.allclose(pi.sum(axis=0), 1.0)
    assert "no support" in caplog.text


def test_tables_force_link():
    hier = hier_state(K=2, D=1, scale=0.0 + 1e-300)
    gp = GraphPrior(np.ones((2, 2), dtype=np.int64), np.ones((2, 2)))
    L = np.array([[0, 3], [3, 0]])
    for s in range(20):
        sample_graph_indicators(gp, hier, L, RngStream(s))
        assert gp.z[0, 1] == 1 and gp.z[1, 0] == 1


def test_zero_rate_gives_no_link():
    hier = hier_state(K=2, D=1, scale=0.0 + 1e-300)
    gp = GraphPrior(np.ones((2, 2), dtype=np.int64), np.ones((2, 2)))
    sample_graph_indicators(gp, hier, np.zeros((2, 2), dtype=np.int64), RngStream(2))
    assert gp.z[0, 1] == 0 and gp.z[1, 0] == 0
    assert np.array_equal(np.diag(gp.z), [1, 1])


def test_z_posterior_two_term_bayes():
    p, w, lq = 0.3, 1.7, 0.6
    like = np.exp(w * np.log(np.exp(-lq)))  # exp(w log(1 - q)) with q = 1 - exp(-lq)
    expected = p * like / (p * like + (1 - p))
    assert np.isclose(z_posterior_prob(np.array(p), np.array(lq), np.array(w)), expected, rtol=1e-14)


def test_z_posterior_with_w_integrated():
    p, lq, e0 = 0.4, 0.9, 2.0
    gen = np.random.default_rng(0)
    w = gen.gamma(e0, 1 / e0, size=2_000_000)
    like = np.mean(np.exp(-w * lq))
    expected = p * like / (p * like + 1 - p)
    assert abs(z_posterior_prob(np.array(p), np.array(lq), None, e0) - expected) < 1e-3


def test_weights_substitution():
    # e0=1, h=4, z=1, q=1-e^-1 -> Gam(5, rate 2)
    draws = []
    for s in range(40000):
        gp = GraphPrior(np.ones((1, 1), dtype=np.int64), np.ones((1, 1)), e0=1.0, lq=np.array([1.0]), h=np.array([[4]]))
        draws.append(sample_graph_weights(gp, None, RngStream(s))[0, 0])
    assert se_ok(draws, 2.5)


def test_weights_prior_when_unlinked():
    draws = []
    for s in range(20000):
        gp = GraphPrior(np.zeros((1, 1), dtype=np.int64), np.ones((1, 1)), e0=1.0, lq=np.array([3.0]))
        draws.append(sample_graph_weights(gp, None, RngStream(s))[0, 0])
    assert se_ok(draws, 1.0)


def test_hierarchy_counts_support_and_conservation():
    hier = hier_state(K=3, D=2)
    z = np.array([[1, 0, 1], [1, 1, 1], [0, 1, 1]])
    gp = GraphPrior(z, np.ones((3, 3)))
    sample_hierarchy_counts(gp, hier, RngStream(3))
    off = ~np.eye(3, dtype=bool)
    assert np.array_equal((hier.omega >= 1)[off], (z == 1)[off])
    assert np.array_equal(hier.omega_sub.sum(axis=(1, 2)), hier.omega)
    assert hier.omega[0, 1] == 0 and hier.omega_sub[0, :, :, 1].sum() == 0


def test_hierarchy_single_cell():
    hier = hier_state(K=2, D=1)
    gp = GraphPrior(np.ones((2, 2), dtype=np.int64), np.ones((2, 2)))
    sample_hierarchy_counts(gp, hier, RngStream(4))
    assert np.array_equal(hier.omega_sub[:, 0, 0, :], hier.omega)


def test_hierarchy_cell_means():
    # symmetric m, diagonal v: only d1 = d2 cells, in proportion to m v m
    hier = HierarchyState(m=np.array([[1.0, 2.0], [1.0, 2.0]]), v=np.diag([3.0, 0.5]), lam=np.ones(2), a=np.ones(2), c=np.ones(2))
    gp = GraphPrior(np.ones((2, 2), dtype=np.int64), np.ones((2, 2)))
    cells = []
    for s in range(20000):
        sample_hierarchy_counts(gp, hier, RngStream(s))
        cells.append(hier.omega_sub[0, :, :, 1].ravel() / hier.omega[0, 1])
    cells = np.array(cells)
    assert np.all(cells[:, [1, 2]] == 0)
    assert se_ok(cells[:, 0], 3.0 / (3.0 + 2.0))


def test_memberships_substitution():
    # K=2, D=1: the exposure of m_1 counts community 2 in both roles
    hier = HierarchyState(m=np.array([[0.5], [1.5]]), v=np.array([[0.7]]), lam=np.ones(1), a=np.array([1.2, 0.8]), c=np.array([2.0, 1.0]))
    hier.omega_sub[0, 0, 0, 1] = 3
    hier.omega_sub[1, 0, 0, 0] = 1
    e0, j0 = 1.0, 1.0
    got = HierarchyState(**{k: getattr(hier, k).copy() if isinstance(getattr(hier, k), np.ndarray) else getattr(hier, k)
                            for k in ("m", "v", "lam", "a", "c", "xi", "gamma1", "c0", "beta", "omega", "omega_sub")})
    sample_hier_memberships(got, e0, j0, RngStream(5))

    gen = RngStream(5).gen
    count = 4  # both roles of community 1
    p = 2 * 0.7 * 1.5
    l = crt_many(np.array([count]), np.array([1.2]), gen)
    a = gen.standard_gamma(e0 + l.sum()) / (j0 + np.log1p(p / 2.0))
    m = gen.standard_gamma(a + count) / (2.0 + p)
    c = gen.standard_gamma(1.0 + a * 1) / (1.0 + m)
    assert np.isclose(got.a[0], a, rtol=1e-14)
    assert np.isclose(got.m[0, 0], m, rtol=1e-14)
    assert np.isclose(got.c[0], c, rtol=1e-14)


def test_memberships_without_counts_are_prior_like():
    hier = hier_state(K=2, D=2)
    sample_hier_memberships(hier, 1.0, 1.0, RngStream(6))
    assert np.array_equal(hier.l_kd, np.zeros((2, 2)))
    assert np.all(hier.m > 0)


def test_core_single_hierarchy_substitution():
    hier = HierarchyState(m=np.array([[0.5], [1.5]]), v=np.array([[0.7]]), lam=np.array([1.1]), a=np.ones(2), c=np.ones(2), xi=0.9, beta=1.4)
    hier.omega_sub[0, 0, 0, 1] = 2
    sample_hier_core(hier, 1.0, 1.0, RngStream(7))

    gen = RngStream(7).gen
    theta = 2 * 0.5 * 1.5
    l = crt_many(np.array([2]), np.array([0.9 * 1.1]), gen)
    lg = np.log1p(theta / 1.4)
    lam = gen.standard_gamma(1.0 / 1 + l[0]) / (1.0 + 0.9 * lg)
    xi = gen.standard_gamma(1.0 + l[0]) / (1.0 + lam * lg)
    v = gen.standard_gamma(lam * xi + 2) / (1.4 + theta)
    assert np.isclose(hier.lam[0], lam, rtol=1e-14)
    assert np.isclose(hier.xi, xi, rtol=1e-14)
    assert np.isclose(hier.v[0, 0], v, rtol=1e-14)


def test_core_without_counts_lambda_prior_shape():
    hier = hier_state(K=2, D=2)
    sample_hier_core(hier, 1.0, 1.0, RngStream(8))
    assert hier.l_dd.sum() == 0


def test_v_exposure_excludes_diagonal_pairs():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    theta = v_exposure(m)
    brute = sum(np.outer(m[a], m[b]) for a in range(2) for b in range(2) if a != b)
    assert np.allclose(theta, brute)
    assert np.allclose(link_rates(HierarchyState(m=m, v=np.eye(2), lam=np.ones(2), a=np.ones(2), c=np.ones(2))), m @ m.T)


def test_hypers_substitution_without_tables():
    # no tables: gamma1 ~ Gam(1, 1 + mean log-term) and c0 ~ Gam(1 + gamma1, 1 + sum lambda)
    from hsepm.graph_prior import lambda_exposure

    hier = hier_state(K=2, D=2)
    hier.lam[:] = [0.2, 0.3]
    hier.c0 = 1.5
    lp = np.log1p(lambda_exposure(hier) / hier.c0)
    sample_hier_hypers(hier, 1.0, 1.0, RngStream(10), freeze_beta=True, gamma1_update="crt")

    gen = RngStream(10).gen
    crt_many(np.zeros(2, dtype=np.int64), np.ones(2), gen)
    g1 = gen.standard_gamma(1.0) / (1.0 + lp.sum() / 2)
    c0 = gen.standard_gamma(1.0 + g1) / (1.0 + 0.5)
    assert np.isclose(hier.gamma1, g1, rtol=1e-14) and np.isclose(hier.c0, c0, rtol=1e-14)


def test_freeze_beta_holds_beta():
    hier = hier_state()
    hier.beta = 0.37
    sample_hier_hypers(hier, 1.0, 1.0, RngStream(9), freeze_beta=True)
    assert hier.beta == 0.37
    sample_hier_hypers(hier, 1.0, 1.0, RngStream(9), freeze_beta=False)
    assert hier.beta != 0.37
