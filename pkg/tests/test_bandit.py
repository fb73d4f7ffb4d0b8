import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditmf.bandit import (
    REFERENCE_SCHEDULES,
    UCB1,
    AlphaSchedule,
    EpsilonGreedy,
    LinUCB,
    SessionTrace,
    RoundRecord,
    ThompsonSampling,
    UniformRandomPolicy,
    make_policy,
    normalize_reward,
    regret_series,
    replay_ctr,
)
from banditmf.dataset import ReplayLog
from banditmf.errors import BanditMFError


# -- context-free policies ----------------------------------------------------------


def test_epsilon_zero_exploits():
    p = EpsilonGreedy(3, epsilon=0.0)
    p.update(1, 1.0)
    p.update(0, 0.0)
    p.update(2, 0.0)
    rng = np.random.default_rng(0)
    assert {p.select_arm(t, rng) for t in range(1, 50)} == {1}


def test_epsilon_greedy_ties_to_lowest_index():
    assert EpsilonGreedy(4, epsilon=0.0).select_arm(1, np.random.default_rng(0)) == 0


def test_ucb_initial_sweep_in_order():
    p = UCB1(4)
    rng = np.random.default_rng(0)
    picks = []
    for t in range(1, 5):
        a = p.select_arm(t, rng)
        picks.append(a)
        p.update(a, 0.0)
    assert picks == [0, 1, 2, 3]


def test_ucb_index_formula():
    p = UCB1(2, c=1.0)
    p.update(0, 1.0)
    p.update(1, 0.5)
    p.update(1, 0.5)
    idx = p.index(3)
    assert idx[0] == pytest.approx(1.0 + math.sqrt(2 * math.log(3) / 1))
    assert idx[1] == pytest.approx(0.5 + math.sqrt(2 * math.log(3) / 2))


def test_update_examples():
    p = EpsilonGreedy(2)
    p.update(0, 1.0)
    assert p.means[0] == 1.0 and p.counts[0] == 1
    p.update(0, 0.0)
    assert p.means[0] == 0.5
    with pytest.raises(BanditMFError):
        p.update(0, 1.5)
    with pytest.raises(BanditMFError):
        p.update(2, 0.5)


def test_thompson_fractional_update():
    p = ThompsonSampling(2)
    p.update(1, 0.7)
    assert p.alpha[1] == pytest.approx(1.7) and p.beta[1] == pytest.approx(1.3)
    assert p.posterior_mean()[1] == pytest.approx(1.7 / 3.0)
    assert np.all(p.alpha > 0) and np.all(p.beta > 0)


def test_incremental_mean_matches_batch():
    rng = np.random.default_rng(1)
    p = UCB1(3)
    pulls = {a: [] for a in range(3)}
    for _ in range(500):
        a, r = int(rng.integers(3)), float(rng.random())
        p.update(a, r)
        pulls[a].append(r)
    for a in range(3):
        assert p.means[a] == pytest.approx(np.mean(pulls[a]), abs=1e-12)
        assert p.counts[a] == len(pulls[a])


def test_make_policy():
    assert isinstance(make_policy("ts", 3), ThompsonSampling)
    assert isinstance(make_policy("ucb", 3), UCB1)
    assert make_policy("egreedy", 3, epsilon=0.3).epsilon == 0.3
    with pytest.raises(BanditMFError):
        make_policy("softmax", 3)


@pytest.mark.parametrize("name", ["egreedy", "ucb", "ts"])
def test_two_arm_bernoulli_share(name):
    """Over 100 seeds of 10000 rounds each, the 0.9 arm gets > 80% of pulls on average."""
    shares = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        good = seed % 2
        p = make_policy(name, 2)
        hits = 0
        for t in range(1, 10001):
            a = p.select_arm(t, rng)
            p.update(a, float(rng.random() < (0.9 if a == good else 0.1)))
            hits += a == good
        shares.append(hits / 10000)
    assert np.mean(shares) > 0.8


def test_policy_digest_tracks_state():
    a, b = ThompsonSampling(3), ThompsonSampling(3)
    assert a.digest() == b.digest()
    a.update(0, 0.5)
    assert a.digest() != b.digest()
    b.update(0, 0.5)
    assert a.digest() == b.digest()


# -- LinUCB ---------------------------------------------------------------------------


def test_linucb_fresh_state():
    x = np.array([3.0, 4.0])
    model = LinUCB(3, 2, alpha=0.5)
    arm, p = model.select(x, 1)
    assert arm == 0
    np.testing.assert_allclose(p, 0.5 * 5.0)


def test_linucb_alpha_zero_exploits_planted_theta():
    rng = np.random.default_rng(0)
    theta = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    model = LinUCB(3, 2, alpha=0.0)
    for _ in range(300):
        x = rng.normal(size=2)
        for a in range(3):
            model.update(a, x, float(theta[a] @ x))
    for x in ([1.0, 0.1], [0.1, 1.0], [-1.0, -0.2]):
        assert model.select(np.array(x), 1)[0] == int(np.argmax(theta @ np.array(x)))


def test_linucb_incremental_matches_direct_solve():
    rng = np.random.default_rng(4)
    fast, slow = LinUCB(4, 6, 0.7, incremental=True), LinUCB(4, 6, 0.7, incremental=False)
    for t in range(1, 400):
        ctx = rng.normal(size=(4, 6))
        pf, ps = fast.ucb(ctx, t), slow.ucb(ctx, t)
        np.testing.assert_allclose(pf, ps, rtol=0, atol=1e-8)
        a = int(rng.integers(4))
        r = float(rng.random() < 0.5)
        fast.update(a, ctx[a], r)
        slow.update(a, ctx[a], r)
    for a in range(4):
        np.testing.assert_allclose(fast.A_inv[a] @ fast.A[a], np.eye(6), atol=1e-8)


def test_linucb_dimension_checks():
    model = LinUCB(2, 3)
    with pytest.raises(BanditMFError):
        model.ucb(np.zeros(4), 1)
    with pytest.raises(BanditMFError):
        model.update(0, np.zeros(2), 1.0)
    with pytest.raises(BanditMFError):
        model.update(5, np.zeros(3), 1.0)


def test_alpha_schedules():
    assert AlphaSchedule("constant", 0.25).value(100, 7) == 0.25
    assert AlphaSchedule("inverse_sqrt_t").value(16) == 0.25
    adaptive = AlphaSchedule("adaptive", 0.001, 0.1)
    assert adaptive.value(5, 0) == pytest.approx(0.01)
    assert adaptive.value(5, 4) == pytest.approx(0.001 / 0.4)
    with pytest.raises(BanditMFError):
        AlphaSchedule("cubic")
    with pytest.raises(BanditMFError):
        AlphaSchedule("adaptive", 1.0, 0.0)


def test_alpha_parse_round_trip():
    for s in REFERENCE_SCHEDULES:
        assert AlphaSchedule.parse(str(s)) == s
    assert AlphaSchedule.parse("0.5") == AlphaSchedule("constant", 0.5)
    with pytest.raises(BanditMFError):
        AlphaSchedule.parse("adaptive:1")


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["constant", "inverse_sqrt_t", "adaptive"]), st.floats(0, 10), st.floats(0.01, 10), st.integers(1, 10**6), st.floats(0, 1e4))
def test_alpha_non_negative(kind, c, scale, t, correct):
    assert AlphaSchedule(kind, c, scale).value(t, correct) >= 0


# -- replay -----------------------------------------------------------------------------


class _Scripted:
    """Picks from a fixed sequence; records which rows it learned from."""

    def __init__(self, n_arms, picks):
        self.n_arms = n_arms
        self.picks = picks
        self.learned = []

    def select(self, contexts, t):
        return self.picks[t - 1], None

    def update(self, arm, x, reward):
        self.learned.append((arm, reward))


def _brute_force_ctr(actions, rewards, picks):
    matched = [r for a, r, p in zip(actions, rewards, picks) if a == p]
    return sum(matched) / len(matched) if matched else math.nan


def test_replay_matches_counting_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        actions = rng.integers(0, 3, 20)
        rewards = rng.integers(0, 2, 20)
        picks = rng.integers(0, 3, 20).tolist()
        log = ReplayLog(actions, rewards, rng.random((20, 4)))
        policy = _Scripted(3, picks)
        result = replay_ctr(log, policy)
        expected = _brute_force_ctr(actions, rewards, picks)
        if math.isnan(expected):
            assert math.isnan(result.ctr)
        else:
            assert result.ctr == expected
        assert result.matches == sum(a == p for a, p in zip(actions, picks))
        assert policy.learned == [(a, r) for a, r, p in zip(actions, rewards, picks) if a == p]
        assert result.arm_predictions.tolist() == np.bincount(picks, minlength=3).tolist()


def test_replay_always_match_all_ones():
    log = ReplayLog(np.zeros(20, dtype=int), np.ones(20, dtype=int), np.ones((20, 3)))
    result = replay_ctr(log, LinUCB(1, 3, 1.0))
    assert result.ctr == 1.0
    assert np.all(result.ctr_series == 1.0)


def test_replay_ctr_series_undefined_before_first_match():
    log = ReplayLog(np.array([1, 1, 0]), np.array([1, 0, 1]), np.zeros((3, 2)))
    result = replay_ctr(log, _Scripted(2, [0, 0, 0]))
    assert math.isnan(result.ctr_series[0]) and math.isnan(result.ctr_series[1])
    assert result.ctr_series[2] == 1.0


def test_replay_empty_log_is_undefined():
    result = replay_ctr(ReplayLog(np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros((0, 3))), LinUCB(2, 3))
    assert result.matches == 0 and math.isnan(result.ctr)


def test_replay_rejects_unknown_action():
    log = ReplayLog(np.array([5]), np.array([1]), np.zeros((1, 2)))
    with pytest.raises(BanditMFError):
        replay_ctr(log, LinUCB(2, 2))


def test_uniform_random_policy_spreads():
    policy = UniformRandomPolicy(4, np.random.default_rng(0))
    counts = np.bincount([policy.select(None, t)[0] for t in range(4000)], minlength=4)
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)


# -- rewards and regret ----------------------------------------------------------------


def test_normalize_reward_examples():
    assert normalize_reward(5, 5) == 1.0
    assert normalize_reward(0, 5) == 0.0
    assert normalize_reward(3.5, 5) == 0.7
    for bad in ((6, 5), (-1, 5)):
        with pytest.raises(BanditMFError):
            normalize_reward(*bad)
    with pytest.raises(BanditMFError):
        normalize_reward(1, 0)


def test_regret_series():
    np.testing.assert_allclose(regret_series([0.5, 1.0, 0.25], 1.0), [0.5, 0.5, 1.25])
    with pytest.raises(BanditMFError):
        regret_series([0.5, 0.9], 0.8)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_regret_non_decreasing(expected):
    series = regret_series(expected, max(expected))
    assert np.all(np.diff(series) >= 0)
    assert series[0] >= 0


def test_session_trace_prefix_sums():
    trace = SessionTrace()
    for t, (r, g) in enumerate([(0.8, 0.0), (0.2, 0.5), (1.0, 0.0)], start=1):
        trace.append(RoundRecord(t, 0, t, r * 5, r, 1.0 - g, g))
    np.testing.assert_allclose(trace.cumulative_reward, [0.8, 1.0, 2.0])
    np.testing.assert_allclose(trace.cumulative_regret, [0.0, 0.5, 0.5])
    assert len(trace) == 3
