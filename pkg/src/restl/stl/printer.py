"""Canonical text, templates and English renderings of STL formulas."""

from __future__ import annotations

from typing import FrozenSet, Optional

from .syntax import (
    BINARY,
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
    Placeholder,
    Until,
    atoms,
    map_atoms,
)

PLACEHOLDER = "φ"

# binding strength used to decide where parentheses are needed
_PREC = {Implies: 1, Or: 2, And: 3}
_UNARY_PREC = 4
_BINARY_SYMBOL = {And: "&", Or: "|", Implies: "->"}


def fmt_number(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def render_interval(interval: Optional[Interval]) -> str:
    if interval is None:
        return ""
    hi = interval.hi if interval.symbolic else fmt_number(interval.hi)
    return f"[{fmt_number(interval.lo)},{hi}]"


def render_expr(atom: Atomic) -> str:
    parts = []
    for i, (coef, var) in enumerate(atom.lhs):
        mag = abs(coef)
        if var is None:
            body = fmt_number(mag)
        elif mag == 1.0:
            body = var
        else:
            body = f"{fmt_number(mag)}*{var}"
        if i == 0:
            parts.append(("-" if coef < 0 else "") + body)
        else:
            parts.append(("- " if coef < 0 else "+ ") + body)
    return " ".join(parts)


def render_atom(atom: Atomic) -> str:
    if atom.op is None:
        return render_expr(atom)
    return f"{render_expr(atom)} {atom.op} {fmt_number(atom.rhs)}"


def _prec(f: Formula) -> int:
    return _PREC.get(type(f), _UNARY_PREC)


def _operand(f: Formula, parent_prec: int, strict: bool) -> str:
    text = render(f)
    p = _prec(f)
    if isinstance(f, Atomic) or p < parent_prec or (strict and p == parent_prec):
        return f"({text})"
    return text


def render(f: Formula) -> str:
    """Canonical single-line text for ``f``.

    Atomic operands of connectives are always parenthesized, temporal
    operators always wrap their operand, and binary connectives get the fewest
    parentheses their precedence allows.
    """
    if isinstance(f, Atomic):
        return render_atom(f)
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Placeholder):
        return PLACEHOLDER
    if isinstance(f, Not):
        c = f.child
        inner = render(c)
        if isinstance(c, (Atomic, Until)) or isinstance(c, BINARY):
            inner = f"({inner})"
        return "!" + inner
    if isinstance(f, BINARY):
        p = _PREC[type(f)]
        # & and | associate left, -> associates right
        left_strict = isinstance(f, Implies)
        left = _operand(f.left, p, strict=left_strict)
        right = _operand(f.right, p, strict=not left_strict)
        return f"{left} {_BINARY_SYMBOL[type(f)]} {right}"
    if isinstance(f, (Globally, Finally)):
        op = "G" if isinstance(f, Globally) else "F"
        return f"{op}{render_interval(f.interval)}({render(f.child)})"
    if isinstance(f, Until):
        return f"({render(f.left)}) U{render_interval(f.interval)} ({render(f.right)})"
    raise TypeError(f"not a formula: {f!r}")


def to_template(f: Formula) -> Formula:
    """Replace every atomic predicate with the placeholder, keeping intervals."""
    return map_atoms(f, lambda _: Placeholder())


def extract_atomic_propositions(f: Formula) -> FrozenSet[str]:
    return frozenset(render_atom(a) for a in atoms(f))


def formula_length(f: Formula) -> int:
    """Number of non-whitespace characters in the canonical rendering."""
    return sum(1 for ch in render(f) if not ch.isspace())


_CMP_PHRASE = {
    ">": "is greater than",
    ">=": "is at least",
    "<": "is less than",
    "<=": "is at most",
    "==": "is equal to",
}


def _when(interval: Optional[Interval]) -> str:
    if interval is None:
        return ""
    hi = interval.hi if interval.symbolic else fmt_number(interval.hi)
    return f" from {fmt_number(interval.lo)} to {hi}"


def render_templated_nl(f: Formula) -> str:
    """Deterministic English reading of ``f`` built from a fixed phrase table."""
    if isinstance(f, Atomic):
        if f.op is None:
            return f"{render_expr(f)} is true"
        return f"{render_expr(f)} {_CMP_PHRASE[f.op]} {fmt_number(f.rhs)}"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Placeholder):
        return PLACEHOLDER
    if isinstance(f, Not):
        return f"it is not the case that {render_templated_nl(f.child)}"
    if isinstance(f, And):
        return f"{render_templated_nl(f.left)} and {render_templated_nl(f.right)}"
    if isinstance(f, Or):
        return f"{render_templated_nl(f.left)} or {render_templated_nl(f.right)}"
    if isinstance(f, Implies):
        return f"if {render_templated_nl(f.left)} then {render_templated_nl(f.right)}"
    if isinstance(f, Globally):
        return f"at every time{_when(f.interval)}, {render_templated_nl(f.child)}"
    if isinstance(f, Finally):
        return f"at some time{_when(f.interval)}, {render_templated_nl(f.child)}"
    if isinstance(f, Until):
        return (
            f"{render_templated_nl(f.left)} holds until, at some time{_when(f.interval)}, "
            f"{render_templated_nl(f.right)}"
        )
    raise TypeError(f"not a formula: {f!r}")
