"""Tokenizer and recursive-descent parser for the STL surface syntax.

Grammar, loosest binding first::

    formula  := implies
    implies  := or ("->" implies)?          right-associative
    or       := and ("|" and)*
    and      := unary ("&" unary)*
    unary    := "!" unary
              | ("G" | "F") interval? unary
              | primary ("U" interval? unary)?
    primary  := "(" formula ")" | "true" | "false" | "φ" | atom
    atom     := expr (cmp number)?          a bare identifier is a boolean signal
    expr     := "-"? term (("+" | "-") term)*
    term     := number ("*" ident)? | ident
    interval := "[" number "," (number | ident) "]"

Unicode operators (∧ ∨ ¬ → ≥ ≤ ⊥ ⊤ □ ◇) are accepted and mapped to their ASCII
forms, and subscripted intervals such as ``G_[0,5]`` or ``G_{[0,5]}`` are
normalized on input.
"""

from __future__ import annotations

import re
from typing import List, NamedTuple, Optional

from .syntax import (
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
    Until,
)

PLACEHOLDER = "φ"
KEYWORDS = {"G", "F", "U", "true", "false"}
CMP_TOKENS = {">", ">=", "<", "<=", "=="}

_ALIASES = {
    "∧": "&", "&&": "&", "∨": "|", "||": "|", "¬": "!", "~": "!",
    "→": "->", "⇒": "->", "=>": "->", "≥": ">=", "≤": "<=", "=": "==",
    "⊥": "false", "⊤": "true", "□": "G", "◇": "F", "◊": "F", "ϕ": PLACEHOLDER,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<op>->|=>|>=|<=|==|&&|\|\||[<>=!~&|()\[\],+\-*φϕ∧∨¬→⇒≥≤⊥⊤□◇◊])
    """,
    re.VERBOSE,
)

_SUBSCRIPT_OPEN = re.compile(r"\b([GFU])_\{?\[")
_SUBSCRIPT_CLOSE = re.compile(r"\]\}")


class Token(NamedTuple):
    kind: str  # "number", "ident", "op" or "eof"
    text: str
    pos: int


def _normalize(text: str) -> str:
    if "_" in text:
        text = _SUBSCRIPT_OPEN.sub(r"\1[", text)
        text = _SUBSCRIPT_CLOSE.sub("]", text)
    return text


def lex(text: str) -> List[Token]:
    text = _normalize(text)
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unknown character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            if kind == "op":
                tok = _ALIASES.get(tok, tok)
                if tok in ("true", "false", "G", "F"):
                    kind = "ident"
            out.append(Token(kind, tok, pos))
        pos = m.end()
    return out


def tokenize(text: str) -> List[str]:
    """Split formula text into tokens; whitespace is discarded.

    >>> tokenize("RPM<2500")
    ['RPM', '<', '2500']
    """
    return [t.text for t in lex(text)]


class _Parser:
    def __init__(self, text: str):
        self.toks = lex(text)
        end = len(text)
        self.toks.append(Token("eof", "", end))
        self.i = 0

    def peek(self, offset: int = 0) -> Token:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.peek().text == text and self.peek().kind != "eof":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ParseError(f"expected {text!r}, found {found}", tok.pos)
        return self.next()

    def parse(self) -> Formula:
        if self.peek().kind == "eof":
            raise ParseError("empty formula", 0)
        f = self.implies()
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r}", tok.pos)
        return f

    def implies(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.implies())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.accept("|"):
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        while self.accept("&"):
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        if self.accept("!"):
            return Not(self.unary())
        if tok.kind == "ident" and tok.text in ("G", "F"):
            self.next()
            interval = self.interval()
            child = self.unary()
            return Globally(interval, child) if tok.text == "G" else Finally(interval, child)
        left = self.primary()
        if self.peek().kind == "ident" and self.peek().text == "U":
            self.next()
            interval = self.interval()
            return Until(interval, left, self.unary())
        return left

    def interval(self) -> Optional[Interval]:
        if self.peek().text != "[":
            return None
        start = self.next().pos
        lo = self.number()
        self.expect(",")
        tok = self.peek()
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            hi = self.next().text
        else:
            hi = self.number()
        self.expect("]")
        try:
            return Interval(lo, hi)
        except IntervalError as exc:
            raise IntervalError(f"{exc} (at position {start})") from None

    def number(self) -> float:
        neg = self.accept("-")
        tok = self.peek()
        if tok.kind != "number":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ParseError(f"expected a number, found {found}", tok.pos)
        self.next()
        value = float(tok.text)
        return -value if neg else value

    def primary(self) -> Formula:
        tok = self.peek()
        if self.accept("("):
            f = self.implies()
            self.expect(")")
            return f
        if tok.kind == "ident" and tok.text == "false":
            self.next()
            return Bottom()
        if tok.kind == "ident" and tok.text == "true":
            self.next()
            return Not(Bottom())
        if self.accept(PLACEHOLDER):
            return Placeholder()
        return self.atom()

    def atom(self) -> Formula:
        start = self.peek()
        terms = [self.term(negate=self.accept("-"))]
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            sign = self.next().text
            terms.append(self.term(negate=sign == "-"))
        if self.peek().text in CMP_TOKENS:
            op = self.next().text
            return Atomic(tuple(terms), op, self.number())
        if len(terms) == 1 and terms[0] == (1.0, terms[0][1]) and terms[0][1] is not None:
            return Atomic(tuple(terms))
        raise ParseError("expected a comparison operator", self.peek().pos if self.peek().kind != "eof" else start.pos)

    def term(self, negate: bool = False):
        tok = self.peek()
        sign = -1.0 if negate else 1.0
        if tok.kind == "number":
            self.next()
            coef = float(tok.text)
            if self.accept("*"):
                return (sign * coef, self.ident())
            return (sign * coef, None)
        return (sign, self.ident())

    def ident(self) -> str:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ParseError(f"expected a signal name, found {found}", tok.pos)
        return self.next().text


def parse(text: str) -> Formula:
    """Parse STL text into a formula tree.

    Raises ``ParseError`` (with a character position) on malformed input and
    ``IntervalError`` for intervals with ``lo >= hi`` or negative bounds.
    """
    return _Parser(text).parse()
