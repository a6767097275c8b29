"""Small synthetic NL/STL data for tests, demos and the bundled corpus."""

from __future__ import annotations

import random
from typing import List, Tuple

from .rl.policy import GrammarSpec
from .rl.ppo import PpoConfig
from .stl import Atomic, Finally, Formula, Globally, Implies, Interval, And, render

TOY_VARIABLES = ("speed", "temperature", "pressure")
TOY_THRESHOLDS = (10.0, 20.0, 30.0, 40.0, 50.0)
TOY_LO = (0.0, 1.0, 2.0, 3.0, 4.0)
TOY_WIDTH = (1.0, 2.0, 5.0, 10.0)
_CMP_WORDS = {"<": "below", ">": "above"}


def toy_spec(max_depth: int = 2, feature_dim: int = 512) -> GrammarSpec:
    """Grammar whose bins cover every toy-task ground truth."""
    return GrammarSpec(
        variables=TOY_VARIABLES,
        comparators=("<", ">"),
        thresholds=TOY_THRESHOLDS,
        lo_bins=TOY_LO,
        width_bins=TOY_WIDTH,
        max_depth=max_depth,
        feature_dim=feature_dim,
    )


def toy_ppo_config(seed: int = 0, total_episodes: int = 10_000) -> PpoConfig:
    """Settings that solve the toy task within 10k episodes.

    Reward gaps between near-miss choices here (G vs F, adjacent interval
    bins) are a few hundredths, so the default eta of 0.05 holds the policy
    near its start; a small eta and a larger step size let it commit.
    """
    return PpoConfig(lr=0.05, eta=0.005, epochs=4, batch_size=32, seed=seed, total_episodes=total_episodes)


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else str(v)


def toy_task(n: int = 48, seed: int = 0) -> List[Tuple[str, Formula]]:
    """One sentence family: ``G[lo, lo+w](var op thr)``, distinct ground truths."""
    rng = random.Random(seed)
    seen = set()
    out = []
    while len(out) < n:
        var = rng.choice(TOY_VARIABLES)
        op = rng.choice(("<", ">"))
        thr = rng.choice(TOY_THRESHOLDS)
        lo = rng.choice(TOY_LO)
        width = rng.choice(TOY_WIDTH)
        key = (var, op, thr, lo, width)
        if key in seen:
            continue
        seen.add(key)
        x = (f"the {var} must always stay {_CMP_WORDS[op]} {_num(thr)} "
             f"from second {_num(lo)} for {_num(width)} seconds")
        out.append((x, Globally(Interval(lo, lo + width), Atomic.of(var, op, thr))))
    return out


_SIGNALS = ("speed", "temperature", "pressure", "rpm", "altitude", "voltage")


def toy_corpus(n: int = 50, seed: int = 0) -> List[dict]:
    """Instruction/input/output records drawn from four sentence families."""
    rng = random.Random(seed)
    instruction = "Translate the following natural language requirement into a Signal Temporal Logic formula."
    records = []
    seen = set()
    while len(records) < n:
        a, b = rng.sample(_SIGNALS, 2)
        op1, op2 = rng.choice("<>"), rng.choice("<>")
        t1, t2 = rng.choice((10, 20, 30, 50, 100)), rng.choice((5, 15, 25, 40))
        lo = rng.choice((0, 1, 2, 5))
        hi = lo + rng.choice((3, 5, 10, 20))
        family = rng.randrange(4)
        iv = Interval(lo, hi)
        p = Atomic.of(a, op1, t1)
        q = Atomic.of(b, op2, t2)
        if family == 0:
            x = f"The {a} must always stay {_CMP_WORDS[op1]} {t1} between {lo} and {hi} seconds."
            y = Globally(iv, p)
        elif family == 1:
            x = f"At some point between {lo} and {hi} seconds, the {a} should be {_CMP_WORDS[op1]} {t1}."
            y = Finally(iv, p)
        elif family == 2:
            x = (f"Whenever the {a} is {_CMP_WORDS[op1]} {t1} during the first {hi} seconds, "
                 f"the {b} must be {_CMP_WORDS[op2]} {t2} within {lo} to {lo + 2} seconds.")
            y = Globally(Interval(0, hi), Implies(p, Finally(Interval(lo, lo + 2), q)))
        else:
            x = (f"Between {lo} and {hi} seconds, the {a} stays {_CMP_WORDS[op1]} {t1} "
                 f"and the {b} stays {_CMP_WORDS[op2]} {t2}.")
            y = Globally(iv, And(p, q))
        text = render(y)
        if text in seen:
            continue
        seen.add(text)
        records.append({"instruction": instruction, "input": x, "output": text})
    return records
