"""Error-category analysis of predicted formulas.

Four independent flags per sample:

* ``ap``: the predicates differ once numeric constants are ignored,
* ``operator``: the operator multisets differ and neither template embeds
  in the other,
* ``value``: predicates or intervals that line up differ in their constants,
* ``redundancy``: the prediction's template is strictly larger and contains
  the reference's template.

Embedding lets a conjunction or disjunction in the larger tree be skipped by
descending into one operand, so dropping or adding a whole conjunct shows up
as an AP or redundancy error rather than an operator error.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..stl import And, Atomic, Finally, Formula, Globally, Or, Until, atoms, size, to_template, walk
from ..stl.printer import render_interval

_TEMPORAL = (Globally, Finally, Until)
_ASSOC = (And, Or)


@dataclass(frozen=True)
class ErrorFlags:
    ap: bool = False
    operator: bool = False
    value: bool = False
    redundancy: bool = False

    @property
    def any(self) -> bool:
        return self.ap or self.operator or self.value or self.redundancy


def ap_signature(a: Atomic) -> str:
    """Predicate shape with every numeric constant dropped."""
    names = " + ".join(v for _, v in a.lhs if v is not None)
    return names if a.op is None else f"{names} {a.op}"


def _constants(a: Atomic) -> Tuple[float, ...]:
    return tuple(c for c, _ in a.lhs) + ((a.rhs,) if a.rhs is not None else ())


def _operator_counts(f: Formula) -> Counter:
    return Counter(type(n).__name__ for n in walk(f) if n.children())


def _match(small: Formula, big: Formula) -> bool:
    if type(small) is type(big):
        sc, bc = small.children(), big.children()
        if all(_match(s, b) for s, b in zip(sc, bc)):
            return True
        if isinstance(small, _ASSOC) and _match(sc[0], bc[1]) and _match(sc[1], bc[0]):
            return True
    if isinstance(big, _ASSOC):
        return _match(small, big.left) or _match(small, big.right)
    return False


def embeds(small: Formula, big: Formula) -> bool:
    """Does ``small`` match some subtree of ``big`` (intervals and predicates ignored)?"""
    return any(_match(small, sub) for sub in walk(big))


def _intervals_by_kind(f: Formula) -> Dict[str, List[str]]:
    out: Dict[str, List[str]] = defaultdict(list)
    for n in walk(f):
        if isinstance(n, _TEMPORAL):
            out[type(n).__name__].append(render_interval(n.interval))
    return out


def _constants_by_signature(f: Formula) -> Dict[str, set]:
    out: Dict[str, set] = defaultdict(set)
    for a in atoms(f):
        out[ap_signature(a)].add(_constants(a))
    return out


def analyze_errors(ref: Formula, hyp: Formula) -> ErrorFlags:
    ref_consts = _constants_by_signature(ref)
    hyp_consts = _constants_by_signature(hyp)
    ap = set(ref_consts) != set(hyp_consts)

    ref_t, hyp_t = to_template(ref), to_template(hyp)
    operator = (_operator_counts(ref) != _operator_counts(hyp)
                and not embeds(ref_t, hyp_t) and not embeds(hyp_t, ref_t))

    value = any(ref_consts[s] != hyp_consts[s] for s in set(ref_consts) & set(hyp_consts))
    if not value:
        ri, hi = _intervals_by_kind(ref), _intervals_by_kind(hyp)
        value = any(a != b for kind in ri for a, b in zip(ri[kind], hi.get(kind, ())))

    redundancy = size(hyp_t) > size(ref_t) and embeds(ref_t, hyp_t)
    return ErrorFlags(ap, operator, value, redundancy)


@dataclass
class ErrorProfile:
    ap_errors: int = 0
    operator_errors: int = 0
    value_errors: int = 0
    redundancy_errors: int = 0
    parse_failures: int = 0
    samples_with_errors: int = 0
    per_sample: List[Optional[ErrorFlags]] = field(default_factory=list)

    @property
    def total_flags(self) -> int:
        return self.ap_errors + self.operator_errors + self.value_errors + self.redundancy_errors

    def add(self, flags: Optional[ErrorFlags]):
        self.per_sample.append(flags)
        if flags is None:
            self.parse_failures += 1
            return
        self.ap_errors += flags.ap
        self.operator_errors += flags.operator
        self.value_errors += flags.value
        self.redundancy_errors += flags.redundancy
        self.samples_with_errors += flags.any

    def to_json(self) -> dict:
        return {
            "ap_errors": self.ap_errors,
            "operator_errors": self.operator_errors,
            "value_errors": self.value_errors,
            "redundancy_errors": self.redundancy_errors,
            "total_flags": self.total_flags,
            "samples_with_errors": self.samples_with_errors,
            "parse_failures": self.parse_failures,
            "per_sample": [None if f is None else asdict(f) for f in self.per_sample],
        }


def error_profile(pairs: Sequence[Tuple[Formula, Optional[Formula]]]) -> ErrorProfile:
    """Profile over (ref, hyp) pairs; ``hyp=None`` counts as a parse failure."""
    profile = ErrorProfile()
    for ref, hyp in pairs:
        profile.add(None if hyp is None else analyze_errors(ref, hyp))
    return profile
