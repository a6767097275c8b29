import math

import numpy as np
import pytest

from restl.encoders import HashedTfidfEncoder
from restl.reward_model import FEATURE_NAMES, ModelRewards, RewardModelParams
from restl.rewards import MetricRewards, RewardWeights
from restl.rl.policy import GrammarPolicy, GrammarSpec
from restl.rl.ppo import (
    PpoConfig,
    PpoState,
    TrainingError,
    advantages_for,
    mean_policy_kl,
    objective_and_grad,
    policy_gradient,
    ppo_update,
    score_trajectory,
    train_loop,
)
from restl.toy import toy_spec, toy_task

UNIT = (1.0, 1.0, 1.0, 1.0)
ZERO = (0.0, 0.0, 0.0, 0.0)


def _bandit_policy():
    spec = GrammarSpec(variables=("a", "b", "c"), comparators=(">",), thresholds=(0.0,), node_kinds=("atom",),
                       max_depth=1, feature_dim=8)
    return GrammarPolicy(spec)


def _favor(var):
    def rewards(x, hyp, ref):
        return UNIT if hyp.lhs[0][1] == var else ZERO
    return rewards


def _batch(policy, rewards, n, seed, ref=None, eta=0.0, xs=("in",)):
    rng = np.random.default_rng(seed)
    w = RewardWeights(eta=eta)
    return [score_trajectory(policy.sample(xs[i % len(xs)], rng, ref=ref), None, rewards, w) for i in range(n)]


def _random_policy(spec, seed, scale=0.5):
    return GrammarPolicy(spec, np.random.default_rng(seed).normal(scale=scale, size=GrammarPolicy(spec).n_params))


def test_zero_advantage_leaves_parameters():
    policy = _random_policy(GrammarSpec(max_depth=2, feature_dim=16), 0)
    batch = _batch(policy, lambda x, h, r: UNIT, 16, 1)
    new, stats, _ = ppo_update(policy, batch, policy.copy(), PpoConfig(eta=0.0))
    assert np.array_equal(new.theta, policy.theta)
    # at policy == ref the KL term has zero gradient too
    new, _, _ = ppo_update(policy, batch, policy.copy(), PpoConfig(eta=0.05))
    assert np.max(np.abs(new.theta - policy.theta)) < 1e-12
    assert stats.clip_fraction == 0.0


def test_update_does_not_mutate_input():
    policy = _bandit_policy()
    before = policy.theta.copy()
    batch = _batch(policy, _favor("b"), 32, 0)
    ppo_update(policy, batch, policy.copy(), PpoConfig(eta=0.0), PpoState(baseline=0.3))
    assert np.array_equal(policy.theta, before)


def test_bandit_probability_increases_monotonically():
    policy = _bandit_policy()
    ref = policy.copy()
    rewards = _favor("b")
    cfg = PpoConfig(eta=0.0, lr=0.05)
    state = PpoState()
    history = [policy.probs("var@", "in")[1]]
    for step in range(25):
        batch = _batch(policy, rewards, 32, step, ref=ref)
        policy, _, state = ppo_update(policy, batch, ref, cfg, state)
        history.append(policy.probs("var@", "in")[1])
    assert all(b > a for a, b in zip(history, history[1:]))
    assert history[-1] > 0.9


def _finite_difference(policy, batch, ref, adv, clip, eta, theta, h=1e-6):
    fd = np.zeros_like(theta)
    for i in np.flatnonzero(np.ones_like(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        hi = objective_and_grad(policy, batch, ref, adv, clip, eta, theta + e)[0]
        lo = objective_and_grad(policy, batch, ref, adv, clip, eta, theta - e)[0]
        fd[i] = (hi - lo) / (2 * h)
    return fd


@pytest.mark.parametrize("clip,eta,shift", [(0.2, 0.0, 0.05), (0.2, 0.05, 0.05), (math.inf, 0.05, 0.4), (0.2, 0.5, 0.6)])
def test_gradient_matches_finite_differences(clip, eta, shift):
    spec = GrammarSpec(max_depth=2, feature_dim=4, thresholds=(0.0, 1.0), lo_bins=(0.0, 1.0), width_bins=(1.0, 2.0))
    behavior = _random_policy(spec, 1)
    ref = _random_policy(spec, 2)
    batch = _batch(behavior, lambda x, h, r: (0.2, 0.5, 0.1, 0.9), 12, 3, ref=ref, xs=("first text", "second one"))
    adv = list(np.random.default_rng(4).normal(size=len(batch)))
    theta = behavior.theta + np.random.default_rng(5).normal(scale=shift, size=behavior.n_params)
    _, grad, _ = objective_and_grad(behavior, batch, ref, adv, clip, eta, theta)
    fd = _finite_difference(behavior, batch, ref, adv, clip, eta, theta)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(grad) < 1e-4


def test_unclipped_surrogate_matches_vanilla_pg_on_policy():
    spec = GrammarSpec(max_depth=2, feature_dim=8)
    policy = _random_policy(spec, 6)
    ref = _random_policy(spec, 7)
    batch = _batch(policy, lambda x, h, r: (0.3, 0.2, 0.9, 0.5), 20, 8, ref=ref)
    adv = list(np.random.default_rng(9).normal(size=len(batch)))
    for eta in (0.0, 0.05):
        surrogate = objective_and_grad(policy, batch, ref, adv, math.inf, eta)[1]
        vanilla = policy_gradient(policy, batch, ref, adv, eta)
        np.testing.assert_allclose(surrogate, vanilla, rtol=1e-10, atol=1e-14)
        # on-policy the clipped surrogate has the same gradient
        np.testing.assert_allclose(objective_and_grad(policy, batch, ref, adv, 0.2, eta)[1], vanilla, rtol=1e-10, atol=1e-14)


def test_clipping_zeroes_gradient_outside_trust_region():
    policy = _bandit_policy()
    batch = _batch(policy, _favor("a"), 8, 0)
    theta = policy.theta.copy()
    theta[:: 3] += 5.0  # strongly favors choice "a" for every feature row
    adv = [1.0 if t.formula.lhs[0][1] == "a" else 0.0 for t in batch]
    _, grad, frac = objective_and_grad(policy, batch, policy, adv, 0.2, 0.0, theta)
    assert frac > 0 and np.allclose(grad, 0.0)


def test_advantages_and_baseline():
    policy = _bandit_policy()
    batch = _batch(policy, _favor("a"), 10, 0)
    state = PpoState()
    adv = advantages_for(batch, state, 0.99)
    rewards = [t.r_total for t in batch]
    mean = np.mean(rewards)
    assert np.allclose(adv, [r - mean for r in rewards])
    expected = mean
    for r in rewards:
        expected = 0.99 * expected + 0.01 * r
    assert state.baseline == pytest.approx(expected)


def test_config_validation():
    for bad in (dict(clip=0.0), dict(clip=1.5), dict(eta=-1), dict(baseline_decay=1.0), dict(lr=0)):
        with pytest.raises(ValueError):
            PpoConfig(**bad)
    PpoConfig(clip=math.inf)


def test_non_finite_gradient_is_an_error():
    policy = _bandit_policy()
    batch = _batch(policy, _favor("a"), 8, 0)
    with pytest.raises(TrainingError):
        ppo_update(policy, batch, policy.copy(), PpoConfig(eta=0.0), PpoState(baseline=float("nan")))


def _toy(n=24):
    data = toy_task(n)
    enc = HashedTfidfEncoder.fit(x for x, _ in data)
    return data, enc


def test_large_eta_keeps_policy_near_start():
    data, enc = _toy()
    p0 = GrammarPolicy(toy_spec())
    free = train_loop(data, p0, MetricRewards(enc), PpoConfig(eta=0.0, lr=0.03, total_episodes=960, seed=1))
    held = train_loop(data, p0, MetricRewards(enc), PpoConfig(eta=50.0, lr=0.03, total_episodes=960, seed=1))
    xs = [x for x, _ in data]
    kl_free, kl_held = mean_policy_kl(free.policy, p0, xs), mean_policy_kl(held.policy, p0, xs)
    # Adam moves every parameter by about lr per step, so a strong penalty
    # bounds the drift rather than pinning it to zero
    assert kl_held < 0.1 * kl_free
    r_rl = [row["mean_r_rl"] for row in held.curve]
    assert abs(np.mean(r_rl[-5:]) - np.mean(r_rl[:5])) < 0.03


def test_toy_reward_improves():
    data, enc = _toy()
    result = train_loop(data, GrammarPolicy(toy_spec()), MetricRewards(enc),
                        PpoConfig(lr=0.03, eta=0.01, total_episodes=3000, seed=0))
    first, last = result.window_means(500)
    assert last > first
    assert len(result.curve) == math.ceil(3000 / 32)


def test_reward_model_mode_runs():
    data, enc = _toy(12)
    w = np.zeros(len(FEATURE_NAMES))
    w[FEATURE_NAMES.index("nl_cosine")] = 2.0
    models = {t: RewardModelParams(t, w) for t in "atls"}
    cfg = PpoConfig(lr=0.03, eta=0.01, total_episodes=640, seed=0)
    metric = train_loop(data, GrammarPolicy(toy_spec()), MetricRewards(enc), cfg)
    model = train_loop(data, GrammarPolicy(toy_spec()), ModelRewards(models, enc), cfg)
    assert len(model.curve) == len(metric.curve)
    assert all(np.isfinite(row["mean_r_total"]) for row in model.curve)
    assert all(0 <= row["mean_r_rl"] <= 1 for row in model.curve)


def test_train_loop_is_deterministic():
    data, enc = _toy(6)
    cfg = PpoConfig(total_episodes=200, seed=3)
    a = train_loop(data, GrammarPolicy(toy_spec()), MetricRewards(enc), cfg)
    b = train_loop(data, GrammarPolicy(toy_spec()), MetricRewards(enc), cfg)
    assert np.array_equal(a.policy.theta, b.policy.theta) and a.curve == b.curve


def test_curve_and_summary_files(tmp_path):
    data, enc = _toy(6)
    p0 = GrammarPolicy(toy_spec())
    result = train_loop(data, p0, MetricRewards(enc), PpoConfig(total_episodes=100))
    result.write_curve(tmp_path / "curve.csv")
    result.write_summary(tmp_path / "summary.json", dataset=data, ref=p0)
    header = (tmp_path / "curve.csv").read_text().splitlines()[0]
    assert header == "step,mean_r_rl,mean_r_total,mean_kl,clip_fraction"
    assert "exact_match_rate" in (tmp_path / "summary.json").read_text()
