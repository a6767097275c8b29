"""Preference data construction and Bradley-Terry reward models.

Each reward model is a linear scorer over a fixed feature vector of
``(x, formula)`` with a logistic output, trained on (chosen, rejected) pairs by
minimizing ``-log sigmoid(r(chosen) - r(rejected))``.
"""

from __future__ import annotations

import json
import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .encoders import HashedTfidfEncoder, TextEncoder, cosine
from .rewards import (
    METRIC_TAGS,
    metric_ap_alignment,
    metric_stl_similarity,
    metric_succinctness,
    metric_templated_nl_similarity,
)
from .stl import (
    And,
    Finally,
    Formula,
    Globally,
    Implies,
    Not,
    Or,
    Until,
    depth,
    extract_atomic_propositions,
    formula_length,
    parse,
    render,
    render_templated_nl,
    walk,
)
from .textmetrics import canonical_tokens, rouge_l

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FEATURE_NAMES = (
    "ap_count",
    "n_globally", "n_finally", "n_until", "n_and", "n_or", "n_not", "n_implies",
    "interval_count",
    "char_length",
    "length_per_input_word",
    "length_per_input_word_sq",
    "nl_token_overlap",
    "nl_cosine",
    "max_depth",
    "numeric_constants",
    "ap_count_gap",
    "number_gap",
)
_OP_TYPES = (Globally, Finally, Until, And, Or, Not, Implies)
_WORDS = re.compile(r"[a-z0-9_.]+")
_NUMBER = re.compile(r"^-?\d+(\.\d+)?$")
_COMPARISON_CUES = frozenset(
    ("above", "below", "greater", "less", "exceeds", "exceed", "under", "over", "higher", "lower", "equal", "equals")
)


class TrainingError(RuntimeError):
    pass


def featurize(x: str, y: Formula, encoder: TextEncoder) -> np.ndarray:
    nodes = list(walk(y))
    ops = [sum(1 for n in nodes if type(n) is t) for t in _OP_TYPES]
    intervals = sum(1 for n in nodes if isinstance(n, (Globally, Finally, Until)) and n.interval is not None)
    length = formula_length(y)
    x_words = _WORDS.findall(x.lower())
    ratio = length / max(1, len(x_words))
    nl = render_templated_nl(y)
    nl_words = set(_WORDS.findall(nl.lower()))
    overlap = len(nl_words & set(x_words)) / len(nl_words) if nl_words else 0.0
    numbers = sum(1 for tok in canonical_tokens(y) if tok[0].isdigit() or tok[0] == ".")
    aps = len(extract_atomic_propositions(y))
    # how far the formula's size is from what the input sentence mentions
    x_cues = sum(1 for w in x_words if w in _COMPARISON_CUES)
    x_numbers = sum(1 for w in x_words if _NUMBER.match(w))
    return np.array(
        [
            aps,
            *ops,
            intervals,
            length,
            ratio,
            # with the linear term this lets a linear head peak at a preferred length
            ratio ** 2,
            overlap,
            cosine(encoder.encode(x), encoder.encode(nl)),
            depth(y),
            numbers,
            abs(aps - x_cues),
            abs(numbers - x_numbers),
        ],
        dtype=float,
    )


@dataclass(frozen=True)
class CandidateSet:
    x: str
    candidates: Tuple[Formula, ...]
    provenance: str = "unknown"


@dataclass(frozen=True)
class PreferencePair:
    x: str
    chosen: Formula
    rejected: Formula
    metric: str
    margin: float

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "chosen": render(self.chosen),
            "rejected": render(self.rejected),
            "metric": self.metric,
            "margin": self.margin,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PreferencePair":
        if obj["metric"] not in METRIC_TAGS:
            raise ValueError(f"unknown metric tag {obj['metric']!r}")
        return cls(obj["x"], parse(obj["chosen"]), parse(obj["rejected"]), obj["metric"], float(obj["margin"]))


def save_preferences(path, pairs: Iterable[PreferencePair]):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def load_preferences(path) -> List[PreferencePair]:
    with open(path, encoding="utf-8") as fh:
        return [PreferencePair.from_json(json.loads(line)) for line in fh if line.strip()]


def select_diverse_candidates(samples: Sequence[Formula], k: int = 3) -> List[Formula]:
    """Greedy farthest-point selection under ROUGE-L similarity.

    Seeds with the least similar pair, then repeatedly adds the sample whose
    maximum similarity to the selection is smallest. Ties go to the earlier
    sample. The result keeps input order.
    """
    if k < 2:
        raise ValueError("need k >= 2 candidates")
    seen = {}
    for f in samples:
        seen.setdefault(render(f), f)
    distinct = list(seen.values())
    if len(distinct) <= k:
        if len(distinct) < k:
            warnings.warn(f"only {len(distinct)} distinct samples for k={k}", stacklevel=2)
        return distinct
    toks = [canonical_tokens(f) for f in distinct]
    n = len(distinct)
    sim = np.ones((n, n))
    for i, j in combinations(range(n), 2):
        sim[i, j] = sim[j, i] = rouge_l(toks[i], toks[j])
    best = None
    for i, j in combinations(range(n), 2):
        if best is None or sim[i, j] < sim[best]:
            best = (i, j)
    chosen = list(best)
    while len(chosen) < k:
        rest = [i for i in range(n) if i not in chosen]
        chosen.append(min(rest, key=lambda i: (max(sim[i, c] for c in chosen), i)))
    return [distinct[i] for i in sorted(chosen)]


def metric_score(tag: str, x: str, hyp: Formula, ref: Formula, encoder: TextEncoder) -> float:
    if tag == "a":
        return metric_ap_alignment(hyp, ref)
    if tag == "t":
        return metric_templated_nl_similarity(x, hyp, encoder)
    if tag == "l":
        return metric_succinctness(hyp, ref)
    if tag == "s":
        return metric_stl_similarity(hyp, ref)
    raise ValueError(f"unknown metric tag {tag!r}")


def build_preferences(cs: CandidateSet, ref: Formula, metric: str, encoder: Optional[TextEncoder] = None) -> List[PreferencePair]:
    """One pair per candidate pair whose scores differ strictly; ties are dropped."""
    encoder = encoder or HashedTfidfEncoder()
    scores = [metric_score(metric, cs.x, c, ref, encoder) for c in cs.candidates]
    pairs = []
    for i, j in combinations(range(len(scores)), 2):
        if scores[i] == scores[j]:
            continue
        hi, lo = (i, j) if scores[i] > scores[j] else (j, i)
        pairs.append(PreferencePair(cs.x, cs.candidates[hi], cs.candidates[lo], metric, scores[hi] - scores[lo]))
    return pairs


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def bt_probability(r_chosen: float, r_rejected: float) -> float:
    return float(sigmoid(r_chosen - r_rejected))


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def bt_loss_and_grad(w: np.ndarray, diffs: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean BT negative log-likelihood and its gradient in ``w``.

    ``diffs`` holds one row ``phi(chosen) - phi(rejected)`` per pair, already in
    the model's scaled feature space.
    """
    z = diffs @ w
    loss = float(np.mean(_softplus(-z)))
    grad = -(sigmoid(-z)[:, None] * diffs).mean(axis=0)
    return loss, grad


@dataclass
class RewardModelParams:
    metric: str
    weights: np.ndarray
    bias: float = 0.0
    scale: np.ndarray = field(default=None)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.scale is None:
            self.scale = np.ones_like(self.weights)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.weights.shape != (len(FEATURE_NAMES),) or self.scale.shape != self.weights.shape:
            raise ValueError(f"expected {len(FEATURE_NAMES)} weights for schema v{self.schema_version}")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ValueError("reward model parameters must be finite")

    @classmethod
    def zeros(cls, metric: str) -> "RewardModelParams":
        return cls(metric, np.zeros(len(FEATURE_NAMES)))

    def raw(self, features: np.ndarray) -> float:
        return float(self.weights @ (features / self.scale) + self.bias)

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "metric": self.metric,
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "feature_scale": [float(v) for v in self.scale],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RewardModelParams":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported reward model schema {obj.get('schema_version')!r}")
        return cls(obj["metric"], obj["weights"], obj["bias"], obj.get("feature_scale"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RewardModelParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def score(params: RewardModelParams, x: str, y: Formula, encoder: TextEncoder) -> float:
    """Reward in (0, 1): the logistic of the linear head."""
    return float(sigmoid(params.raw(featurize(x, y, encoder))))


def pair_differences(pairs: Sequence[PreferencePair], encoder: TextEncoder) -> np.ndarray:
    cache: Dict[Tuple[str, str], np.ndarray] = {}

    def feats(x, f):
        key = (x, render(f))
        if key not in cache:
            cache[key] = featurize(x, f, encoder)
        return cache[key]

    return np.array([feats(p.x, p.chosen) - feats(p.x, p.rejected) for p in pairs]).reshape(len(pairs), -1)


def bt_nll_loss(params: RewardModelParams, batch: Sequence[PreferencePair], encoder: TextEncoder) -> float:
    if not batch:
        raise ValueError("empty preference batch")
    chosen = np.array([params.raw(featurize(p.x, p.chosen, encoder)) for p in batch])
    rejected = np.array([params.raw(featurize(p.x, p.rejected, encoder)) for p in batch])
    return float(np.mean(_softplus(-(chosen - rejected))))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    lr: float = 0.05
    batch_size: int = 16
    seed: int = 0
    init_std: float = 0.01


def fit_bradley_terry(diffs: np.ndarray, cfg: TrainConfig = TrainConfig()) -> Tuple[np.ndarray, List[float]]:
    """Adam on the BT loss over pre-scaled difference rows, in the given order."""
    if len(diffs) == 0:
        raise TrainingError("no preference pairs to train on")
    rng = np.random.default_rng(cfg.seed)
    w = rng.normal(0.0, cfg.init_std, size=diffs.shape[1])
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    trace = []
    for epoch in range(cfg.epochs):
        for start in range(0, len(diffs), cfg.batch_size):
            batch = diffs[start:start + cfg.batch_size]
            loss, grad = bt_loss_and_grad(w, batch)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}: loss={loss}, |w|={np.linalg.norm(w):.3g}")
            step += 1
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad ** 2
            w = w - cfg.lr * (m / (1 - beta1 ** step)) / (np.sqrt(v / (1 - beta2 ** step)) + eps)
        epoch_loss, _ = bt_loss_and_grad(w, diffs)
        trace.append(epoch_loss)
        log.debug("epoch %d: BT loss %.5f", epoch, epoch_loss)
    return w, trace


def feature_scale(pairs: Sequence[PreferencePair], encoder: TextEncoder) -> np.ndarray:
    rows = []
    for p in pairs:
        rows.append(featurize(p.x, p.chosen, encoder))
        rows.append(featurize(p.x, p.rejected, encoder))
    std = np.std(np.array(rows), axis=0)
    return np.where(std > 1e-12, std, 1.0)


def train_reward_model(
    prefs: Sequence[PreferencePair],
    cfg: TrainConfig = TrainConfig(),
    encoder: Optional[TextEncoder] = None,
    metric: Optional[str] = None,
) -> Tuple[RewardModelParams, List[float]]:
    """Train on ``prefs`` in the order given (curriculum order is the caller's)."""
    if not prefs:
        raise TrainingError("no preference pairs to train on")
    encoder = encoder or HashedTfidfEncoder()
    metric = metric or prefs[0].metric
    scale = feature_scale(prefs, encoder)
    diffs = pair_differences(prefs, encoder) / scale
    w, trace = fit_bradley_terry(diffs, cfg)
    return RewardModelParams(metric, w, 0.0, scale), trace


def pairwise_accuracy(params: RewardModelParams, pairs: Sequence[PreferencePair], encoder: TextEncoder) -> float:
    if not pairs:
        return 0.0
    diffs = pair_differences(pairs, encoder) / params.scale
    return float(np.mean(diffs @ params.weights > 0))


class ModelRewards:
    """Reward-model supervision: four trained scorers, no reference needed."""

    def __init__(self, models: Dict[str, RewardModelParams], encoder: Optional[TextEncoder] = None):
        missing = set(METRIC_TAGS) - set(models)
        if missing:
            raise ValueError(f"missing reward models for {sorted(missing)}")
        self.models = models
        self.encoder = encoder or HashedTfidfEncoder()

    def __call__(self, x: str, hyp: Formula, ref: Optional[Formula] = None):
        feats = featurize(x, hyp, self.encoder)
        return tuple(float(sigmoid(self.models[t].raw(feats))) for t in METRIC_TAGS)
