"""Token-level corpus metrics: formula accuracy, template accuracy, BLEU, ROUGE-L."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

from .stl import Formula, render, to_template, tokenize

FORMULA_ACCURACY_NOTE = (
    "formula_accuracy is the mean positional token accuracy; exact_match_rate is the "
    "fraction of canonical renders that match exactly. Published 'Formula Acc.' figures "
    "may correspond to either."
)


def alignment_counts(ref: Sequence[str], hyp: Sequence[str]) -> Tuple[int, int]:
    """(positional matches, max length) for two token sequences."""
    matches = sum(1 for a, b in zip(ref, hyp) if a == b)
    return matches, max(len(ref), len(hyp))


def formula_accuracy(ref: Sequence[str], hyp: Sequence[str]) -> float:
    matches, total = alignment_counts(ref, hyp)
    if total == 0:
        return 1.0
    return matches / total


def canonical_tokens(f: Formula) -> List[str]:
    return tokenize(render(f))


def template_tokens(f: Formula) -> List[str]:
    return tokenize(render(to_template(f)))


def template_accuracy(ref: Formula, hyp: Formula) -> float:
    return formula_accuracy(template_tokens(ref), template_tokens(hyp))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(ref: Sequence[str], hyp: Sequence[str], max_order: int = 4) -> float:
    """Sentence BLEU with uniform weights and a brevity penalty.

    Orders above one use add-one smoothing on both the clipped match count and
    the hypothesis n-gram count, so short formulas do not collapse to zero.
    """
    if not hyp or not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        hyp_counts = _ngrams(hyp, n)
        ref_counts = _ngrams(ref, n)
        matched = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        total = sum(hyp_counts.values())
        if n > 1:
            matched, total = matched + 1, total + 1
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total) / max_order
    c, r = len(hyp), len(ref)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return min(1.0, bp * math.exp(log_sum))


def corpus_bleu(pairs: Sequence[Tuple[Sequence[str], Sequence[str]]]) -> float:
    """Mean sentence BLEU over (ref, hyp) pairs."""
    if not pairs:
        return 0.0
    return sum(bleu(r, h) for r, h in pairs) / len(pairs)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """LCS-based F1 between two token lists."""
    if not ref or not hyp:
        return 0.0
    lcs = lcs_length(ref, hyp)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class MetricReport:
    formula_accuracy: float
    template_accuracy: float
    bleu: float
    exact_match_rate: float
    sample_count: int
    parse_failures: int = 0

    def to_json(self) -> str:
        body = asdict(self)
        body["note"] = FORMULA_ACCURACY_NOTE
        return json.dumps(body, indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("formula_accuracy", f"{self.formula_accuracy:.4f}"),
            ("template_accuracy", f"{self.template_accuracy:.4f}"),
            ("bleu", f"{self.bleu:.4f}"),
            ("exact_match_rate", f"{self.exact_match_rate:.4f}"),
            ("sample_count", str(self.sample_count)),
            ("parse_failures", str(self.parse_failures)),
        ]
        width = max(len(k) for k, _ in rows)
        lines = ["# " + FORMULA_ACCURACY_NOTE, f"{'metric':<{width}}  value", "-" * (width + 8)]
        lines += [f"{k:<{width}}  {v}" for k, v in rows]
        return "\n".join(lines)
