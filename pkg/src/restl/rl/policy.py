"""A conditioned stochastic grammar over bounded STL formulas.

Every choice made while deriving a formula is a *decision point* keyed by
``kind@path``, where ``path`` is the string of child indices from the root
(``""`` is the root, ``"01"`` the right child of the root's left child).
Kinds are ``node`` (which production), ``var``/``cmp``/``thr`` (atom slot
fillers) and ``lo``/``width`` (interval bins, ``hi = lo + width``).

Logits for a decision are ``[1, phi(x)] @ W_key`` where ``phi`` is a sparse
hashed bag of word unigrams and bigrams of the input sentence. With all of
``W`` at zero the policy is uniform at every decision.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..encoders import _bucket
from ..rewards import RewardVector
from ..stl import And, Atomic, Finally, Formula, Globally, Implies, Interval, Not, Or, Until

NODE_KINDS = ("atom", "not", "and", "or", "implies", "G", "F", "U")
_TEMPORAL = {"G": Globally, "F": Finally}
_BINARY = {"and": And, "or": Or, "implies": Implies}
_WORDS = re.compile(r"[a-z0-9_.]+")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class GrammarSpec:
    variables: Tuple[str, ...] = ("x", "y", "z")
    comparators: Tuple[str, ...] = (">", "<")
    thresholds: Tuple[float, ...] = (0.0, 1.0, 2.0, 5.0)
    lo_bins: Tuple[float, ...] = (0.0, 1.0, 2.0, 5.0)
    width_bins: Tuple[float, ...] = (1.0, 2.0, 5.0, 10.0)
    node_kinds: Tuple[str, ...] = NODE_KINDS
    max_depth: int = 3
    feature_dim: int = 256

    def __post_init__(self):
        for name in ("variables", "comparators", "thresholds", "lo_bins", "width_bins", "node_kinds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise SchemaError(f"{name} must be non-empty")
        object.__setattr__(self, "thresholds", tuple(float(v) for v in self.thresholds))
        object.__setattr__(self, "lo_bins", tuple(float(v) for v in self.lo_bins))
        object.__setattr__(self, "width_bins", tuple(float(v) for v in self.width_bins))
        if "atom" not in self.node_kinds or not set(self.node_kinds) <= set(NODE_KINDS):
            raise SchemaError(f"node kinds must include 'atom' and be drawn from {NODE_KINDS}")
        if min(self.lo_bins) < 0 or min(self.width_bins) <= 0:
            raise SchemaError("interval bins need lo >= 0 and width > 0")
        if self.max_depth < 1 or self.feature_dim < 1:
            raise SchemaError("max_depth and feature_dim must be positive")

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}

    @classmethod
    def from_json(cls, obj: dict) -> "GrammarSpec":
        return cls(**obj)


@dataclass(frozen=True)
class Slot:
    offset: int
    choices: tuple

    @property
    def size(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class Decision:
    key: str
    index: int
    logp: float


@dataclass(frozen=True)
class Trajectory:
    x: str
    decisions: Tuple[Decision, ...]
    formula: Formula
    kl: float = 0.0
    reward: Optional[RewardVector] = None

    @property
    def logp(self) -> float:
        return math.fsum(d.logp for d in self.decisions)

    @property
    def r_total(self) -> float:
        if self.reward is None:
            raise ValueError("trajectory has not been scored")
        return self.reward.r_total

    def with_reward(self, reward: RewardVector) -> "Trajectory":
        return replace(self, reward=reward)


@lru_cache(maxsize=4096)
def text_hash_features(x: str, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sparse ``[1, phi(x)]`` as (row indices, values); row 0 is the bias."""
    words = _WORDS.findall(x.lower())
    grams = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
    buckets = sorted({_bucket("p:" + g, dim)[0] for g in grams})
    idx = np.array([0] + [b + 1 for b in buckets], dtype=np.intp)
    val = np.ones(len(idx))
    if buckets:
        val[1:] = 1.0 / math.sqrt(len(buckets))
    idx.setflags(write=False)
    val.setflags(write=False)
    return idx, val


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = np.max(z)
    if not np.isfinite(m):
        raise FloatingPointError(f"no finite logit in {z}")
    shifted = z - m
    return shifted - math.log(np.sum(np.exp(shifted)))


def categorical_kl(logp: np.ndarray, logq: np.ndarray) -> float:
    p = np.exp(logp)
    mask = p > 0
    return float(max(0.0, np.sum(p[mask] * (logp[mask] - logq[mask]))))


def _positions(max_depth: int) -> List[str]:
    out = [""]
    frontier = [""]
    for _ in range(max_depth - 1):
        frontier = [p + c for p in frontier for c in "01"]
        out += frontier
    return out


class GrammarPolicy:
    """Categorical decisions with linear, input-conditioned logits.

    Parameters live in one flat vector ``theta``; ``slots`` maps each decision
    key to its block, a ``(1 + feature_dim, K)`` matrix stored row-major.
    Decisions with a single choice get no parameters and are not recorded.
    """

    def __init__(self, spec: GrammarSpec = GrammarSpec(), theta: Optional[np.ndarray] = None):
        self.spec = spec
        self.slots: Dict[str, Slot] = {}
        rows = spec.feature_dim + 1
        offset = 0
        for path in _positions(spec.max_depth):
            keys = []
            if not self._forced(path):
                keys.append(("node", spec.node_kinds))
                if any(k in ("G", "F", "U") for k in spec.node_kinds):
                    keys += [("lo", spec.lo_bins), ("width", spec.width_bins)]
            keys += [("var", spec.variables), ("cmp", spec.comparators), ("thr", spec.thresholds)]
            for kind, choices in keys:
                if len(choices) > 1:
                    self.slots[f"{kind}@{path}"] = Slot(offset, tuple(choices))
                    offset += rows * len(choices)
        self.n_params = offset
        if theta is None:
            theta = np.zeros(offset)
        theta = np.array(theta, dtype=float)
        if theta.shape != (offset,):
            raise SchemaError(f"theta has shape {theta.shape}, schema needs ({offset},)")
        self.theta = theta

    def _forced(self, path: str) -> bool:
        return len(path) >= self.spec.max_depth - 1

    def copy(self) -> "GrammarPolicy":
        return GrammarPolicy(self.spec, self.theta.copy())

    def check_compatible(self, other: "GrammarPolicy"):
        if self.spec != other.spec:
            raise SchemaError("policies have different decision-point schemas")

    def block(self, key: str, theta: Optional[np.ndarray] = None) -> np.ndarray:
        slot = self.slots[key]
        theta = self.theta if theta is None else theta
        return theta[slot.offset:slot.offset + (self.spec.feature_dim + 1) * slot.size].reshape(-1, slot.size)

    def features(self, x: str):
        return text_hash_features(x, self.spec.feature_dim)

    def logits(self, key: str, x: str, theta: Optional[np.ndarray] = None) -> np.ndarray:
        idx, val = self.features(x)
        return val @ self.block(key, theta)[idx]

    def log_probs(self, key: str, x: str, theta: Optional[np.ndarray] = None) -> np.ndarray:
        return log_softmax(self.logits(key, x, theta))

    def probs(self, key: str, x: str) -> np.ndarray:
        return np.exp(self.log_probs(key, x))

    def set_bias(self, key: str, logits: Sequence[float]):
        """Overwrite the input-independent logits of one decision (``-inf`` allowed)."""
        block = self.block(key)
        if len(logits) != block.shape[1]:
            raise SchemaError(f"{key} has {block.shape[1]} choices, got {len(logits)} logits")
        block[0] = logits

    def derive(self, choose: Callable[[str, Slot], int], path: str = "") -> Formula:
        """Build a formula, asking ``choose(key, slot)`` for every parameterized decision."""
        spec = self.spec

        def pick(kind, choices):
            key = f"{kind}@{path}"
            if key not in self.slots:
                return choices[0]
            slot = self.slots[key]
            return slot.choices[choose(key, slot)]

        kind = "atom" if self._forced(path) else pick("node", spec.node_kinds)
        if kind == "atom":
            return Atomic.of(pick("var", spec.variables), pick("cmp", spec.comparators), pick("thr", spec.thresholds))
        if kind == "not":
            return Not(self.derive(choose, path + "0"))
        if kind in _BINARY:
            return _BINARY[kind](self.derive(choose, path + "0"), self.derive(choose, path + "1"))
        lo = pick("lo", spec.lo_bins)
        interval = Interval(lo, lo + pick("width", spec.width_bins))
        if kind == "U":
            return Until(interval, self.derive(choose, path + "0"), self.derive(choose, path + "1"))
        return _TEMPORAL[kind](interval, self.derive(choose, path + "0"))

    def sample(self, x: str, rng, ref: Optional["GrammarPolicy"] = None) -> Trajectory:
        """Ancestral sample. ``rng`` is a numpy Generator or an integer seed.

        When ``ref`` is given, the trajectory's ``kl`` field holds the sum of
        exact categorical KL(self || ref) over the decisions it visited.
        """
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        decisions: List[Decision] = []
        kl = [0.0]

        def choose(key, slot):
            logp = self.log_probs(key, x)
            i = int(rng.choice(slot.size, p=np.exp(logp)))
            decisions.append(Decision(key, i, float(logp[i])))
            if ref is not None:
                kl[0] += categorical_kl(logp, ref.log_probs(key, x))
            return i

        formula = self.derive(choose)
        return Trajectory(x, tuple(decisions), formula, kl[0])

    def greedy(self, x: str) -> Formula:
        return self.derive(lambda key, slot: int(np.argmax(self.logits(key, x))))

    def log_prob(self, traj: Trajectory) -> float:
        return math.fsum(float(self.log_probs(d.key, traj.x)[d.index]) for d in traj.decisions)

    def decision_kl(self, key: str, x: str, ref: "GrammarPolicy") -> float:
        return categorical_kl(self.log_probs(key, x), ref.log_probs(key, x))

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "theta": [float(v) for v in self.theta]}

    @classmethod
    def from_json(cls, obj: dict) -> "GrammarPolicy":
        return cls(GrammarSpec.from_json(obj["spec"]), np.asarray(obj["theta"], dtype=float))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "GrammarPolicy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def policy_kl(policy: GrammarPolicy, ref: GrammarPolicy, x: str = "") -> float:
    """Exact KL between the two distributions over derivations for input ``x``.

    Each decision point contributes its closed-form categorical KL weighted by
    the probability (under ``policy``) that the derivation reaches it. With a
    single reachable decision this is just that decision's KL.
    """
    policy.check_compatible(ref)
    spec = policy.spec
    memo: Dict[str, float] = {}

    def kl_at(kind, path):
        key = f"{kind}@{path}"
        return policy.decision_kl(key, x, ref) if key in policy.slots else 0.0

    def probs_at(kind, path, n):
        key = f"{kind}@{path}"
        return policy.probs(key, x) if key in policy.slots else np.ones(n)

    def subtree(path):
        if path in memo:
            return memo[path]
        atom = kl_at("var", path) + kl_at("cmp", path) + kl_at("thr", path)
        if policy._forced(path):
            memo[path] = atom
            return atom
        total = kl_at("node", path)
        p = probs_at("node", path, 1)
        for kind, pk in zip(spec.node_kinds, p):
            if pk == 0.0:
                continue
            if kind == "atom":
                part = atom
            elif kind == "not":
                part = subtree(path + "0")
            elif kind in _BINARY:
                part = subtree(path + "0") + subtree(path + "1")
            else:
                part = kl_at("lo", path) + kl_at("width", path) + subtree(path + "0")
                if kind == "U":
                    part += subtree(path + "1")
            total += pk * part
        memo[path] = total
        return total

    return float(subtree(""))
