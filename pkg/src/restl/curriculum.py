"""Curriculum difficulty scorers and training-order permutations.

Difficulty is "higher is harder" for every scorer. The two similarity-based
scorers therefore return ``1 - mean similarity``; ``mean_nl_similarity`` and
``mean_stl_similarity`` expose the raw means.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Sequence

import numpy as np

from .encoders import TextEncoder, cosine
from .stl import Formula, extract_atomic_propositions, formula_length, render_templated_nl
from .textmetrics import canonical_tokens, rouge_l

TAGS = ("ap_count", "nl_similarity", "formula_length", "stl_similarity")
MODES = ("forward", "reverse", "shuffle")


@dataclass(frozen=True)
class CurriculumItem:
    index: int
    difficulty: float
    tag: str

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown curriculum tag {self.tag!r}")
        if not math.isfinite(self.difficulty):
            raise ValueError(f"difficulty must be finite, got {self.difficulty}")


def difficulty_ap_count(ref: Formula) -> float:
    return float(len(extract_atomic_propositions(ref)))


def mean_nl_similarity(x: str, candidates: Sequence[Formula], encoder: TextEncoder) -> float:
    if not candidates:
        raise ValueError("no candidates")
    base = encoder.encode(x)
    return math.fsum(cosine(base, encoder.encode(render_templated_nl(c))) for c in candidates) / len(candidates)


def difficulty_nl_similarity(x: str, candidates: Sequence[Formula], encoder: TextEncoder) -> float:
    return 1.0 - mean_nl_similarity(x, candidates, encoder)


def difficulty_formula_length(ref: Formula) -> float:
    return float(formula_length(ref))


def mean_stl_similarity(ref: Formula, candidates: Sequence[Formula]) -> float:
    if not candidates:
        raise ValueError("no candidates")
    ref_toks = canonical_tokens(ref)
    return math.fsum(rouge_l(ref_toks, canonical_tokens(c)) for c in candidates) / len(candidates)


def difficulty_stl_similarity(ref: Formula, candidates: Sequence[Formula]) -> float:
    return 1.0 - mean_stl_similarity(ref, candidates)


def order(items: Sequence[CurriculumItem], mode: str = "forward", seed: int = 0) -> List[int]:
    """Permutation of record indices; ties always fall back to ascending index.

    ``reverse`` sorts by descending difficulty but keeps ascending index among
    ties, so it is the exact reversal of ``forward`` only when difficulties are
    distinct.
    """
    if mode == "forward":
        return [it.index for it in sorted(items, key=lambda it: (it.difficulty, it.index))]
    if mode == "reverse":
        return [it.index for it in sorted(items, key=lambda it: (-it.difficulty, it.index))]
    if mode == "shuffle":
        base = sorted(it.index for it in items)
        perm = np.random.default_rng(seed).permutation(len(base))
        return [base[i] for i in perm]
    raise ValueError(f"unknown ordering mode {mode!r}; expected one of {MODES}")


def save_manifest(path, items: Iterable[CurriculumItem]):
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            fh.write(json.dumps(asdict(it), sort_keys=True) + "\n")


def load_manifest(path) -> List[CurriculumItem]:
    with open(path, encoding="utf-8") as fh:
        return [CurriculumItem(**json.loads(line)) for line in fh if line.strip()]
