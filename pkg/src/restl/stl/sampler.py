"""Random formula and signal generators for property tests and toy data."""

from __future__ import annotations

import random
from typing import Sequence

import numpy as np

from .semantics import Signal
from .syntax import (
    COMPARATORS,
    And,
    Atomic,
    Bottom,
    Finally,
    Formula,
    Globally,
    Implies,
    Interval,
    Not,
    Or,
    Until,
)

_KINDS = ("not", "and", "or", "implies", "G", "F", "U")


def random_interval(rng: random.Random, max_time: int = 10, untimed_prob: float = 0.0):
    if rng.random() < untimed_prob:
        return None
    lo = rng.randint(0, max_time - 1)
    hi = rng.randint(lo + 1, max_time)
    return Interval(float(lo), float(hi))


def random_atom(rng: random.Random, variables: Sequence[str], thresholds=None) -> Atomic:
    var = rng.choice(list(variables))
    op = rng.choice(COMPARATORS)
    if thresholds is not None:
        rhs = float(rng.choice(list(thresholds)))
    else:
        rhs = float(rng.randint(-5, 5))
    if rng.random() < 0.15 and len(variables) > 1:
        other = rng.choice([v for v in variables if v != var])
        return Atomic(((1.0, var), (-2.0, other)), op, rhs)
    return Atomic.of(var, op, rhs)


def random_formula(
    rng: random.Random,
    max_depth: int = 4,
    variables: Sequence[str] = ("x", "y", "z"),
    max_time: int = 10,
    leaf_prob: float = 0.3,
    untimed_prob: float = 0.1,
    thresholds=None,
) -> Formula:
    """Sample a formula whose tree depth is at most ``max_depth``."""
    if max_depth <= 1 or rng.random() < leaf_prob:
        if rng.random() < 0.03:
            return Bottom()
        return random_atom(rng, variables, thresholds)
    kind = rng.choice(_KINDS)

    def sub():
        return random_formula(rng, max_depth - 1, variables, max_time, leaf_prob, untimed_prob, thresholds)

    if kind == "not":
        return Not(sub())
    if kind == "and":
        return And(sub(), sub())
    if kind == "or":
        return Or(sub(), sub())
    if kind == "implies":
        return Implies(sub(), sub())
    interval = random_interval(rng, max_time, untimed_prob)
    if kind == "G":
        return Globally(interval, sub())
    if kind == "F":
        return Finally(interval, sub())
    return Until(interval, sub(), sub())


def random_signal(rng: random.Random, variables: Sequence[str] = ("x", "y", "z"), max_len: int = 20) -> Signal:
    n = rng.randint(1, max_len)
    dt = rng.choice((1.0, 0.5, 2.0))
    seed = rng.getrandbits(32)
    gen = np.random.default_rng(seed)
    # small integer values make equality predicates fire occasionally
    return Signal(dt, {v: gen.integers(-5, 6, size=n).astype(float) for v in variables})
