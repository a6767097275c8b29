"""Signal Temporal Logic: syntax, parsing, printing and Boolean monitoring."""

from .parser import lex, parse, tokenize
from .printer import (
    PLACEHOLDER,
    extract_atomic_propositions,
    fmt_number,
    formula_length,
    render,
    render_atom,
    render_templated_nl,
    to_template,
)
from .semantics import Signal, SignalError, check, evaluate, load_signal_csv, trace
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
    IntervalError,
    Not,
    Or,
    ParseError,
    Placeholder,
    STLError,
    Until,
    atoms,
    depth,
    desugar,
    size,
    true,
    walk,
)

__all__ = [
    "COMPARATORS", "PLACEHOLDER", "And", "Atomic", "Bottom", "Finally", "Formula", "Globally",
    "Implies", "Interval", "IntervalError", "Not", "Or", "ParseError", "Placeholder", "STLError",
    "Signal", "SignalError", "Until", "atoms", "check", "depth", "desugar", "evaluate",
    "extract_atomic_propositions", "fmt_number", "formula_length", "lex", "load_signal_csv",
    "parse", "render", "render_atom", "render_templated_nl", "size", "to_template", "tokenize",
    "trace", "true", "walk",
]
