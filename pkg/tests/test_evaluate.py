from __future__ import annotations

import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest

from hsepm.evaluate import (
    EvalError,
    accumulate_posterior,
    all_link_probabilities,
    auc_pr,
    auc_roc,
    auc_roc_fraction,
    best_f1_threshold,
    extract_communities,
    link_probability,
    read_link_probs,
    read_predictive,
    score_holdout,
    write_link_probs,
    write_predictive,
)
from hsepm.netdata import dyad_index


def fake_state(phi, r, pi=None, graph=None, hier=None):
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r, dtype=float)
    K = phi.shape[1]
    if pi is None:
        pi = np.full((K, K), 1.0 / K)
    return SimpleNamespace(
        memb=SimpleNamespace(phi=phi), chain=SimpleNamespace(r=r), pi=np.asarray(pi, dtype=float),
        graph=graph, hier=hier,
    )


def random_state(gen, N=5, T=3, K=3):
    pi = gen.dirichlet(np.ones(K), size=K).T
    return fake_state(gen.gamma(1.0, 1.0, (N, K)), gen.gamma(1.0, 1.0, (T, K)), pi)


def brute_auc(scores, truths) -> Fraction:
    pos = [s for s, y in zip(scores, truths) if y]
    neg = [s for s, y in zip(scores, truths) if not y]
    twice = sum(2 if p > n else 1 if p == n else 0 for p in pos for n in neg)
    return Fraction(twice, 2 * len(pos) * len(neg))


# ---------------------------------------------------------------------------
# link probabilities
# ---------------------------------------------------------------------------


def test_zero_rate_gives_zero_probability():
    st = fake_state([[1.0], [0.0], [2.0]], [[3.0]])
    assert link_probability(st, 0, 0, 1) == 0.0


def test_rate_ln2_gives_one_half():
    st = fake_state([[1.0], [1.0]], [[math.log(2.0)]])
    assert link_probability(st, 0, 0, 1) == pytest.approx(0.5, abs=1e-15)


def test_link_probability_symmetric_bitwise():
    gen = np.random.default_rng(0)
    st = random_state(gen, N=6, K=7)
    for i in range(6):
        for j in range(6):
            if i != j:
                assert link_probability(st, 1, i, j) == link_probability(st, 1, j, i)


def test_link_probability_in_unit_interval():
    gen = np.random.default_rng(1)
    st = fake_state(gen.gamma(0.5, 5.0, (8, 4)), gen.gamma(0.5, 5.0, (2, 4)))
    P = all_link_probabilities(st.memb.phi, st.chain.r)
    assert np.all(P >= 0) and np.all(P <= 1)


def test_link_probability_errors():
    st = fake_state([[1.0], [1.0]], [[1.0]])
    with pytest.raises(EvalError):
        link_probability(st, 0, 1, 1)
    with pytest.raises(EvalError):
        link_probability(st, 1, 0, 1)
    with pytest.raises(EvalError):
        link_probability(st, 0, 0, 2)


def test_matrix_matches_scalar():
    gen = np.random.default_rng(2)
    st = random_state(gen, N=5, T=2, K=3)
    P = all_link_probabilities(st.memb.phi, st.chain.r)
    for t in range(2):
        for i in range(5):
            for j in range(i + 1, 5):
                assert P[t, dyad_index(i, j, 5)] == pytest.approx(link_probability(st, t, i, j), rel=1e-14)


def test_summary_probability_is_average_of_state_probabilities():
    # two-state toy: explicit average of 1 - exp(-rate) per state
    s1 = fake_state([[1.0], [2.0]], [[0.5]])
    s2 = fake_state([[3.0], [1.0]], [[0.1]])
    summary = accumulate_posterior(accumulate_posterior(None, s1), s2)
    expected = 0.5 * ((1 - math.exp(-1.0)) + (1 - math.exp(-0.3)))
    assert link_probability(summary, 0, 0, 1) == pytest.approx(expected, rel=1e-15)
    # which differs from the plug-in probability at the mean parameters
    plug = 1 - math.exp(-0.3 * 2.0 * 1.5)
    assert abs(link_probability(summary, 0, 1, 0) - plug) > 1e-3


# ---------------------------------------------------------------------------
# holdout metrics
# ---------------------------------------------------------------------------


def test_perfect_separation():
    p = np.array([0.9, 0.8, 0.7, 0.2, 0.1])
    y = np.array([1, 1, 1, 0, 0], dtype=bool)
    rep = score_holdout(p, y)
    assert rep.auc_roc == 1.0 and rep.auc_pr == 1.0
    assert rep.status == "ok"


def test_probabilities_equal_truths():
    y = np.array([1, 0, 0, 1, 1, 0], dtype=bool)
    rep = score_holdout(y.astype(float), y)
    assert rep.accuracy == 1.0 and rep.f1 == 1.0


@pytest.mark.parametrize("seed", range(20))
def test_auc_matches_pairwise_oracle_small(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, 21))
    scores = np.round(gen.random(n), 1)  # coarse rounding produces ties
    truths = gen.random(n) < 0.5
    truths[0], truths[1] = True, False
    assert auc_roc_fraction(scores, truths) == brute_auc(scores.tolist(), truths.tolist())


def test_auc_all_tied_is_half():
    assert auc_roc(np.full(6, 0.3), np.array([1, 0, 1, 0, 0, 1], dtype=bool)) == 0.5


def test_auc_pr_step_integration_hand_case():
    # ranking: +, -, +  -> precision 1 at recall 1/2, 2/3 at recall 1
    p = np.array([0.9, 0.5, 0.1])
    y = np.array([1, 0, 1], dtype=bool)
    assert auc_pr(p, y) == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3), rel=1e-15)


def test_auc_pr_tie_group_counts_once():
    p = np.array([0.5, 0.5, 0.1])
    y = np.array([1, 0, 1], dtype=bool)
    # the tie group enters at precision 1/2, then recall reaches 1 at precision 2/3
    assert auc_pr(p, y) == pytest.approx(0.5 * 0.5 + 0.5 * (2 / 3), rel=1e-15)


def test_threshold_rule_is_inclusive():
    rep = score_holdout(np.array([0.5, 0.49]), np.array([1, 0], dtype=bool), threshold=0.5)
    assert rep.accuracy == 1.0


def test_single_class_status():
    rep = score_holdout(np.array([0.2, 0.7]), np.array([1, 1], dtype=bool))
    assert rep.status == "single class"
    assert rep.auc_roc is None and rep.auc_pr is None
    assert rep.accuracy == 0.5


def test_empty_mask_status():
    rep = score_holdout(np.zeros(0), np.zeros(0, dtype=bool))
    assert rep.status == "no test entries"


def test_length_mismatch_raises():
    with pytest.raises(EvalError):
        score_holdout(np.zeros(3), np.zeros(2, dtype=bool))


def test_auc_single_class_raises():
    with pytest.raises(EvalError):
        auc_roc([0.1, 0.2], [True, True])


def test_best_f1_threshold_brute_force():
    gen = np.random.default_rng(5)
    p = np.round(gen.random(40), 2)
    y = gen.random(40) < 0.4
    thr, f1 = best_f1_threshold(p, y)
    best = max(score_holdout(p, y, threshold=c).f1 for c in np.unique(p))
    assert f1 == pytest.approx(best, rel=1e-15)
    assert score_holdout(p, y, threshold=thr).f1 == pytest.approx(f1, rel=1e-15)


def test_metrics_in_unit_interval():
    gen = np.random.default_rng(6)
    for _ in range(20):
        p = gen.random(30)
        y = gen.random(30) < 0.3
        y[:2] = [True, False]
        rep = score_holdout(p, y)
        for v in (rep.accuracy, rep.f1, rep.auc_roc, rep.auc_pr, rep.oracle_f1):
            assert 0.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# posterior accumulation
# ---------------------------------------------------------------------------


def test_one_state_summary_equals_state():
    gen = np.random.default_rng(7)
    st = random_state(gen)
    s = accumulate_posterior(None, st)
    assert s.num_collected == 1
    np.testing.assert_array_equal(s.mean_phi, st.memb.phi)
    np.testing.assert_array_equal(s.mean_r, st.chain.r)
    np.testing.assert_array_equal(s.mean_pi, st.pi)
    assert s.mean_z is None


def test_two_states_elementwise_average():
    gen = np.random.default_rng(8)
    a, b = random_state(gen), random_state(gen)
    s = accumulate_posterior(accumulate_posterior(None, a), b)
    np.testing.assert_allclose(s.mean_phi, 0.5 * (a.memb.phi + b.memb.phi), rtol=1e-15)
    np.testing.assert_allclose(s.mean_pi, 0.5 * (a.pi + b.pi), rtol=1e-15)


@pytest.mark.parametrize("c", [0.1, 1.0 / 3.0, 7.3, 999.999])
def test_constant_input_stays_exact(c):
    st = fake_state(np.full((3, 2), c), np.full((2, 2), c), np.full((2, 2), 0.5))
    s = None
    for _ in range(1000):
        s = accumulate_posterior(s, st)
    assert s.num_collected == 1000
    assert np.all(s.mean_phi == c) and np.all(s.mean_r == c)


def test_accumulation_order_independent():
    gen = np.random.default_rng(9)
    states = [fake_state(gen.random((4, 3)) * 1e3, gen.random((2, 3)) * 1e3) for _ in range(50)]
    fwd = bwd = None
    for st in states:
        fwd = accumulate_posterior(fwd, st)
    for st in reversed(states):
        bwd = accumulate_posterior(bwd, st)
    np.testing.assert_allclose(fwd.mean_phi, bwd.mean_phi, rtol=0, atol=1e-12 * 1e3)
    np.testing.assert_allclose(fwd.mean_r, bwd.mean_r, rtol=0, atol=1e-12 * 1e3)


def test_mean_pi_column_stochastic():
    gen = np.random.default_rng(10)
    s = None
    for _ in range(200):
        s = accumulate_posterior(s, random_state(gen, K=5))
    np.testing.assert_allclose(s.mean_pi.sum(axis=0), 1.0, atol=1e-9)


def test_ghsepm_fields_accumulate():
    gen = np.random.default_rng(11)
    graph = SimpleNamespace(z=np.eye(2))
    hier = SimpleNamespace(m=gen.random((2, 3)), v=gen.random((3, 3)), lam=gen.random(3))
    st = fake_state(gen.random((4, 2)), gen.random((2, 2)), graph=graph, hier=hier)
    s = accumulate_posterior(None, st)
    np.testing.assert_array_equal(s.mean_m, hier.m)
    np.testing.assert_array_equal(s.mean_lam, hier.lam)


# ---------------------------------------------------------------------------
# communities
# ---------------------------------------------------------------------------


def test_single_community_labels_zero():
    gen = np.random.default_rng(12)
    s = accumulate_posterior(None, fake_state(gen.random((5, 1)), gen.random((3, 1))))
    comm = extract_communities(s)
    assert np.all(comm.labels == 0)
    assert comm.top.shape == (3, 5, 1)


def test_one_hot_memberships_give_labels():
    idx = np.array([2, 0, 1, 2, 1])
    phi = np.eye(3)[idx]
    s = accumulate_posterior(None, fake_state(phi, np.ones((4, 3))))
    comm = extract_communities(s)
    for t in range(4):
        np.testing.assert_array_equal(comm.labels[t], idx)


def test_ties_take_lowest_index():
    s = accumulate_posterior(None, fake_state(np.ones((2, 4)), np.ones((1, 4))))
    comm = extract_communities(s)
    assert np.all(comm.labels == 0)
    np.testing.assert_array_equal(comm.top[0, 0], [0, 1, 2])


def test_weights_sum_to_one_over_time():
    gen = np.random.default_rng(13)
    s = accumulate_posterior(None, random_state(gen, T=5, K=4))
    comm = extract_communities(s)
    np.testing.assert_allclose(comm.weights.sum(axis=0), 1.0, rtol=1e-14)


def test_scores_definition():
    gen = np.random.default_rng(14)
    st = random_state(gen)
    comm = extract_communities(accumulate_posterior(None, st))
    assert comm.scores[1, 2, 0] == st.chain.r[1, 0] * st.memb.phi[2, 0]


# ---------------------------------------------------------------------------
# artifact round trips
# ---------------------------------------------------------------------------


def test_link_probs_round_trip(tmp_path):
    masked = np.array([[0, 0, 1], [1, 2, 3]])
    probs = np.array([1.0 / 3.0, 0.1 + 0.2])
    truths = np.array([True, False])
    write_link_probs(tmp_path / "lp.csv", masked, probs, truths)
    m2, p2, y2 = read_link_probs(tmp_path / "lp.csv")
    np.testing.assert_array_equal(m2, masked)
    np.testing.assert_array_equal(p2, probs)  # 17 digits round-trips float64 exactly
    np.testing.assert_array_equal(y2, truths)


def test_predictive_lookup(tmp_path):
    gen = np.random.default_rng(15)
    st = random_state(gen, N=5, T=3)
    s = accumulate_posterior(None, st)
    write_predictive(tmp_path / "pred.csv", s)
    assert read_predictive(tmp_path / "pred.csv", 2, 4, 1) == link_probability(s, 2, 1, 4)
    with pytest.raises(EvalError):
        read_predictive(tmp_path / "pred.csv", 0, 3, 3)
