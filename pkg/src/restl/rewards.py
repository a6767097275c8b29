"""Multi-aspect reward metrics and their aggregation.

The four metrics score a generated formula ``hyp`` against the reference
``ref`` (and the source sentence ``x`` for the templated-NL metric):

* ``a``: atomic-proposition precision against the reference,
* ``t``: cosine similarity between ``x`` and an English rendering of ``hyp``,
* ``l``: normalized length agreement,
* ``s``: ROUGE-L over canonical token sequences.

All four live in [0, 1]; ``aggregate`` mixes them with ``RewardWeights`` and
``kl_regularize`` subtracts the KL penalty.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, FrozenSet, Optional, Sequence

from .encoders import HashedTfidfEncoder, TextEncoder, cosine
from .stl import Formula, extract_atomic_propositions, formula_length, render_templated_nl
from .textmetrics import canonical_tokens, rouge_l

log = logging.getLogger(__name__)

METRIC_TAGS = ("a", "t", "l", "s")

APExtractor = Callable[[Formula], FrozenSet[str]]


def metric_ap_alignment(hyp: Formula, ref: Formula, extractor: APExtractor = extract_atomic_propositions) -> float:
    ref_aps = extractor(ref)
    hyp_aps = extractor(hyp)
    if not ref_aps:
        log.warning("reference has no atomic propositions; AP alignment is degenerate")
        return 1.0 if not hyp_aps else 0.0
    return len(hyp_aps & ref_aps) / len(ref_aps)


def metric_templated_nl_similarity(x: str, hyp: Formula, encoder: TextEncoder) -> float:
    if not x:
        raise ValueError("natural-language input is empty")
    c = cosine(encoder.encode(x), encoder.encode(render_templated_nl(hyp)))
    return (c + 1.0) / 2.0


def metric_succinctness(hyp: Formula, ref: Formula) -> float:
    n_ref = formula_length(ref)
    n_hyp = formula_length(hyp)
    return max(0.0, 1.0 - abs(n_ref - n_hyp) / n_ref)


def metric_stl_similarity(hyp: Formula, ref: Formula) -> float:
    return rouge_l(canonical_tokens(ref), canonical_tokens(hyp))


@dataclass(frozen=True)
class RewardWeights:
    a: float = 0.2
    t: float = 0.25
    l: float = 0.35  # noqa: E741
    s: float = 0.2
    eta: float = 0.05

    def __post_init__(self):
        values = (self.a, self.t, self.l, self.s, self.eta)
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ValueError(f"reward weights must be finite and non-negative: {values}")
        if self.a + self.t + self.l + self.s <= 0:
            raise ValueError("at least one reward weight must be positive")

    @property
    def lambdas(self):
        return (self.a, self.t, self.l, self.s)

    @property
    def normalized(self) -> bool:
        return math.isclose(math.fsum(self.lambdas), 1.0, rel_tol=0, abs_tol=1e-12)

    def normalize(self) -> "RewardWeights":
        if self.normalized:
            return self
        total = math.fsum(self.lambdas)
        log.warning("reward weights sum to %g; normalizing to 1", total)
        return RewardWeights(self.a / total, self.t / total, self.l / total, self.s / total, self.eta)


def aggregate(scores: Sequence[float], weights: RewardWeights = RewardWeights()) -> float:
    """Weighted sum of the four metric scores (a, t, l, s)."""
    if len(scores) != 4:
        raise ValueError(f"expected four scores, got {len(scores)}")
    for v in scores:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"metric score {v} outside [0, 1]")
    w = weights.normalize()
    return math.fsum(lam * v for lam, v in zip(w.lambdas, scores))


def kl_regularize(r_rl: float, kl: float, eta: float) -> float:
    if kl < 0:
        raise ValueError(f"KL divergence must be non-negative, got {kl}")
    return r_rl - eta * kl


@dataclass(frozen=True)
class RewardVector:
    m_a: float
    m_t: float
    m_l: float
    m_s: float
    r_rl: float
    r_total: float
    kl: float = 0.0

    @property
    def scores(self):
        return (self.m_a, self.m_t, self.m_l, self.m_s)

    def to_dict(self):
        return asdict(self)


class MetricRewards:
    """Direct metric supervision: scores (x, hyp) against the known reference."""

    def __init__(self, encoder: Optional[TextEncoder] = None, extractor: APExtractor = extract_atomic_propositions):
        self.encoder = encoder or HashedTfidfEncoder()
        self.extractor = extractor

    def __call__(self, x: str, hyp: Formula, ref: Formula):
        return (
            metric_ap_alignment(hyp, ref, self.extractor),
            metric_templated_nl_similarity(x, hyp, self.encoder),
            metric_succinctness(hyp, ref),
            metric_stl_similarity(hyp, ref),
        )


def reward_vector(scores: Sequence[float], weights: RewardWeights = RewardWeights(), kl: float = 0.0) -> RewardVector:
    r_rl = aggregate(scores, weights)
    return RewardVector(*scores, r_rl=r_rl, r_total=kl_regularize(r_rl, kl, weights.eta), kl=kl)
