"""Corpus-level evaluation of predicted formulas against references."""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple, Union

from ..stl import Formula, STLError, parse, render
from ..textmetrics import MetricReport, bleu, canonical_tokens, formula_accuracy, template_accuracy

Prediction = Union[Formula, str, None]


def _as_formula(pred: Prediction) -> Optional[Formula]:
    if pred is None or isinstance(pred, Formula):
        return pred
    try:
        return parse(pred)
    except STLError:
        return None


def sample_scores(ref: Formula, hyp: Optional[Formula]) -> Tuple[float, float, float, float]:
    """(formula accuracy, template accuracy, BLEU, exact match); a failed parse scores zeros."""
    if hyp is None:
        return 0.0, 0.0, 0.0, 0.0
    r, h = canonical_tokens(ref), canonical_tokens(hyp)
    return formula_accuracy(r, h), template_accuracy(ref, hyp), bleu(r, h), float(render(ref) == render(hyp))


def evaluate_corpus(pairs: Sequence[Tuple[Formula, Prediction]]) -> MetricReport:
    """Mean per-sample metrics; ``hyp`` may be a Formula, raw text, or None for a failure.

    BLEU is the mean of sentence scores, so every field is a plain mean and
    the union of two corpora scores as the size-weighted mean of the parts.
    """
    if not pairs:
        raise ValueError("cannot evaluate an empty corpus")
    totals = [[], [], [], []]
    failures = 0
    for ref, pred in pairs:
        hyp = _as_formula(pred)
        if hyp is None:
            failures += 1
        for acc, v in zip(totals, sample_scores(ref, hyp)):
            acc.append(v)
    n = len(pairs)
    fa, ta, bl, em = (math.fsum(t) / n for t in totals)
    return MetricReport(fa, ta, bl, em, n, failures)
