import random

import numpy as np
import pytest

from restl.encoders import HashedTfidfEncoder
from restl.rewards import (
    MetricRewards,
    RewardWeights,
    aggregate,
    kl_regularize,
    metric_ap_alignment,
    metric_stl_similarity,
    metric_succinctness,
    metric_templated_nl_similarity,
    reward_vector,
)
from restl.stl import Atomic, parse, render_templated_nl
from restl.stl.sampler import random_formula

WEIGHTS = RewardWeights(0.2, 0.25, 0.35, 0.2)


class _Orthogonal:
    dimension = 2

    def encode(self, text):
        return np.array([1.0, 0.0]) if text.startswith("#") else np.array([0.0, 1.0])


def test_ap_alignment(case_formulas):
    ref, hyp = (parse(t) for t in case_formulas[2])
    assert metric_ap_alignment(ref, ref) == 1.0
    assert metric_ap_alignment(hyp, ref) == pytest.approx(2 / 3)
    assert metric_ap_alignment(parse("a > 1"), parse("b > 1")) == 0.0


def test_templated_nl_similarity(case_formulas):
    enc = HashedTfidfEncoder()
    f = parse("G[0,3](x > 1)")
    assert metric_templated_nl_similarity(render_templated_nl(f), f, enc) == pytest.approx(1.0)
    assert metric_templated_nl_similarity("#input", f, _Orthogonal()) == 0.5
    x = ("During 10-150 time units, if signal z1 is less than 0.2, then signal z2 remains "
         "less than 0.3 from 1 to 3 time units later.")
    ref, hyp = (parse(t) for t in case_formulas[1])
    assert metric_templated_nl_similarity(x, ref, enc) > metric_templated_nl_similarity(x, hyp, enc)


def test_succinctness():
    ten = parse("abcdefg > 1")  # 10 characters without spaces
    assert metric_succinctness(ten, ten) == 1.0
    ref40 = parse("x" * 38 + " > 1")
    hyp50 = parse("x" * 48 + " > 1")
    assert metric_succinctness(hyp50, ref40) == pytest.approx(0.75)
    assert metric_succinctness(parse("x" * 28 + " > 1"), ten) == 0.0


def test_stl_similarity():
    f = parse("G(x > 8) -> F(y < 3)")
    assert metric_stl_similarity(f, f) == 1.0
    assert metric_stl_similarity(parse("a > 1"), parse("b == 2")) == 0.0


def test_aggregate():
    assert aggregate([1, 1, 1, 1], WEIGHTS) == 1.0
    assert aggregate([0, 0, 0, 0], WEIGHTS) == 0.0
    assert aggregate([1, 0, 0, 0], WEIGHTS) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        aggregate([1.5, 0, 0, 0])
    with pytest.raises(ValueError):
        aggregate([1, 0, 0])


def test_weights_normalize():
    w = RewardWeights(1, 1, 1, 1).normalize()
    assert w.lambdas == (0.25, 0.25, 0.25, 0.25)
    with pytest.raises(ValueError):
        RewardWeights(-1, 1, 1, 1)
    with pytest.raises(ValueError):
        RewardWeights(0, 0, 0, 0)


def test_kl_regularize():
    assert kl_regularize(0.7, 0.0, 0.05) == 0.7
    assert kl_regularize(1.0, 2.0, 0.05) == pytest.approx(0.9)
    assert kl_regularize(1.0, 3.0, 0.05) <= kl_regularize(1.0, 2.0, 0.05)
    with pytest.raises(ValueError):
        kl_regularize(1.0, -0.1, 0.05)


def test_reward_vector():
    rv = reward_vector([1, 1, 1, 1], WEIGHTS, kl=2.0)
    assert rv.r_rl == 1.0 and rv.r_total == pytest.approx(0.9)


def test_metrics_identity_and_range():
    rng = random.Random(3)
    rewards = MetricRewards()
    for _ in range(300):
        ref, hyp = random_formula(rng, 4), random_formula(rng, 4)
        x = "some natural language text"
        scores = rewards(x, hyp, ref)
        assert all(0.0 <= v <= 1.0 for v in scores)
        a, _, l, s = rewards(x, ref, ref)
        assert (a, l, s) == (1.0, 1.0, 1.0)
        assert rewards(render_templated_nl(ref), ref, ref)[1] == pytest.approx(1.0)


def test_ap_alignment_without_aps():
    from restl.stl import Bottom

    assert metric_ap_alignment(Bottom(), Bottom()) == 1.0
    assert metric_ap_alignment(Atomic.of("x", ">", 1), Bottom()) == 0.0
