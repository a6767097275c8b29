import math
import warnings

import numpy as np
import pytest

from synthetic import metric_preferences, planted_preferences, toy_records
from restl.encoders import HashedTfidfEncoder
from restl.reward_model import (
    FEATURE_NAMES,
    CandidateSet,
    ModelRewards,
    PreferencePair,
    RewardModelParams,
    TrainConfig,
    TrainingError,
    bt_loss_and_grad,
    bt_nll_loss,
    bt_probability,
    build_preferences,
    featurize,
    fit_bradley_terry,
    load_preferences,
    metric_score,
    pairwise_accuracy,
    save_preferences,
    score,
    select_diverse_candidates,
    train_reward_model,
)
from restl.stl import parse, render

ENC = HashedTfidfEncoder()


def _f(text):
    return parse(text)


def test_diverse_selection_picks_far_pair():
    a = _f("G[0,5]((speed < 40) & (rpm > 10) & (voltage < 3))")
    a2 = _f("G[0,5]((speed < 40) & (rpm > 10) & (voltage < 4))")
    b = _f("F[1,2](x == 1)")
    chosen = select_diverse_candidates([a, a2, b], k=2)
    assert len(chosen) == 2 and b in chosen and (a in chosen or a2 in chosen)


def test_diverse_selection_is_deterministic_and_ordered():
    samples = [_f(t) for t in ["x > 1", "y < 2", "G[0,1](x > 1)", "F[0,3](z == 0)", "x > 1 & y < 2"]]
    first = select_diverse_candidates(samples, 3)
    assert first == select_diverse_candidates(samples, 3)
    positions = [samples.index(f) for f in first]
    assert positions == sorted(positions)


def test_diverse_selection_degenerate():
    f = _f("x > 1")
    with pytest.warns(UserWarning):
        assert select_diverse_candidates([f, f, f], 3) == [f]


def test_build_preferences_counts():
    ref = _f("G[0,5](x > 1)")
    distinct = CandidateSet("x", (ref, _f("G[0,5](y > 1)"), _f("z == 3")))
    assert len(build_preferences(distinct, ref, "s")) == 3
    same = CandidateSet("x", (ref, ref, ref))
    assert build_preferences(same, ref, "s") == []


def test_build_preferences_strict_ties():
    ref = _f("(a > 1) & (b > 1) & (c > 1)")
    # AP alignment scores 1, 1/3, 1/3
    cs = CandidateSet("x", (ref, _f("a > 1"), _f("b > 1")))
    pairs = build_preferences(cs, ref, "a")
    assert len(pairs) == 2
    assert all(p.chosen == ref for p in pairs)
    assert all(p.margin == pytest.approx(2 / 3) for p in pairs)


def test_metric_score_rejects_unknown_tag():
    with pytest.raises(ValueError):
        metric_score("q", "x", _f("x > 1"), _f("x > 1"), ENC)


def test_bt_probability():
    assert bt_probability(1.3, 1.3) == 0.5
    assert bt_probability(10.0, 0.0) > 0.9999
    assert bt_probability(0.4, -1.1) + bt_probability(-1.1, 0.4) == pytest.approx(1.0)


def test_loss_at_zero_is_ln2():
    pairs, _ = planted_preferences(50, seed=1)
    params = RewardModelParams.zeros("s")
    assert abs(bt_nll_loss(params, pairs, ENC) - math.log(2)) < 1e-12


def test_loss_vanishes_with_margin():
    diffs = np.ones((4, 3))
    losses = [bt_loss_and_grad(np.full(3, c), diffs)[0] for c in (1, 5, 20)]
    assert losses[0] > losses[1] > losses[2] and losses[2] < 1e-20


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(5):
        diffs = rng.normal(size=(32, len(FEATURE_NAMES)))
        w = rng.normal(size=len(FEATURE_NAMES))
        _, grad = bt_loss_and_grad(w, diffs)
        h = 1e-6
        fd = np.array([
            (bt_loss_and_grad(w + h * e, diffs)[0] - bt_loss_and_grad(w - h * e, diffs)[0]) / (2 * h)
            for e in np.eye(len(w))
        ])
        assert np.max(np.abs(fd - grad)) / np.max(np.abs(grad)) < 1e-5


def test_bias_does_not_change_the_loss():
    pairs, _ = planted_preferences(30, seed=2)
    params, _ = train_reward_model(pairs, TrainConfig(epochs=1), ENC)
    shifted = RewardModelParams(params.metric, params.weights, params.bias + 3.0, params.scale)
    assert bt_nll_loss(shifted, pairs, ENC) == pytest.approx(bt_nll_loss(params, pairs, ENC), abs=1e-12)


def test_planted_recovery():
    pairs, _ = planted_preferences(2500, seed=0)
    params, trace = train_reward_model(pairs[:2000], TrainConfig(), ENC)
    assert trace[-1] < math.log(2)
    assert pairwise_accuracy(params, pairs[2000:], ENC) >= 0.9


def test_succinctness_model_ranks_held_out_pairs():
    records = toy_records(400, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train = metric_preferences("l", records[:300], seed=0)
        held = metric_preferences("l", records[300:], seed=1000)
    params, _ = train_reward_model(train, TrainConfig(), ENC)
    assert pairwise_accuracy(params, held, ENC) >= 0.85


def test_training_is_deterministic():
    pairs, _ = planted_preferences(200, seed=3)
    p1, t1 = train_reward_model(pairs, TrainConfig(seed=7), ENC)
    p2, t2 = train_reward_model(pairs, TrainConfig(seed=7), ENC)
    assert np.array_equal(p1.weights, p2.weights) and t1 == t2


def test_training_errors():
    with pytest.raises(TrainingError):
        train_reward_model([], TrainConfig(), ENC)
    with pytest.raises(TrainingError), np.errstate(all="ignore"):
        fit_bradley_terry(np.full((4, 2), np.inf))


def test_score_range_and_monotone():
    x, y = "speed stays below 40", _f("G[0,5](speed < 40)")
    assert score(RewardModelParams.zeros("l"), x, y, ENC) == 0.5
    w = np.zeros(len(FEATURE_NAMES))
    w[FEATURE_NAMES.index("char_length")] = 0.1
    params = RewardModelParams("l", w)
    longer = _f("G[0,5]((speed < 40) & (rpm > 1000))")
    assert 0 < score(params, x, y, ENC) < score(params, x, longer, ENC) < 1


def test_params_persistence(tmp_path):
    pairs, _ = planted_preferences(100, seed=4)
    params, _ = train_reward_model(pairs, TrainConfig(epochs=2), ENC)
    path = tmp_path / "rm.json"
    params.save(path)
    back = RewardModelParams.load(path)
    assert np.array_equal(back.weights, params.weights) and np.array_equal(back.scale, params.scale)
    bad = params.to_json() | {"schema_version": 99}
    with pytest.raises(ValueError):
        RewardModelParams.from_json(bad)
    with pytest.raises(ValueError):
        RewardModelParams("s", np.zeros(3))


def test_preference_roundtrip(tmp_path):
    pairs = [PreferencePair("go", _f("x > 1"), _f("G[0,1](y < 2)"), "a", 0.5)]
    path = tmp_path / "p.jsonl"
    save_preferences(path, pairs)
    assert load_preferences(path) == pairs
    assert render(load_preferences(path)[0].rejected) == "G[0,1](y < 2)"


def test_featurize_shape():
    v = featurize("speed below 40", _f("G[0,5](speed < 40)"), ENC)
    assert v.shape == (len(FEATURE_NAMES),) and np.all(np.isfinite(v))


def test_model_rewards():
    zero = {t: RewardModelParams.zeros(t) for t in "atls"}
    assert ModelRewards(zero, ENC)("x", _f("x > 1")) == (0.5, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        ModelRewards({"a": zero["a"]}, ENC)
