"""Abstract syntax for Signal Temporal Logic formulas.

All nodes are frozen dataclasses, so structural equality and hashing come for
free and formulas can be shared between threads without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple, Union

COMPARATORS = (">", ">=", "<", "<=", "==")

Bound = Union[float, str]


class STLError(ValueError):
    """Base class for malformed formulas."""


class ParseError(STLError):
    def __init__(self, message: str, pos: int = -1):
        super().__init__(message if pos < 0 else f"{message} (at position {pos})")
        self.pos = pos


class IntervalError(STLError):
    pass


@dataclass(frozen=True)
class Interval:
    """Closed time interval ``[lo, hi]``.

    ``hi`` may be a symbolic horizon name (e.g. ``"T"``) that is resolved to a
    number only at evaluation time.
    """

    lo: float
    hi: Bound

    def __post_init__(self):
        if isinstance(self.lo, str):
            raise IntervalError(f"lower bound must be numeric, got {self.lo!r}")
        if self.lo < 0:
            raise IntervalError(f"negative lower bound {self.lo}")
        if not isinstance(self.hi, str):
            if self.hi < 0:
                raise IntervalError(f"negative upper bound {self.hi}")
            if self.lo >= self.hi:
                raise IntervalError(f"empty interval [{self.lo}, {self.hi}]: lower bound must be < upper bound")

    @property
    def symbolic(self) -> bool:
        return isinstance(self.hi, str)

    def resolve(self, horizons: Optional[dict] = None) -> Tuple[float, float]:
        if not self.symbolic:
            return float(self.lo), float(self.hi)
        if not horizons or self.hi not in horizons:
            raise IntervalError(f"unresolved symbolic bound {self.hi!r}")
        hi = float(horizons[self.hi])
        if self.lo >= hi:
            raise IntervalError(f"symbolic bound {self.hi}={hi} does not exceed lower bound {self.lo}")
        return float(self.lo), hi


class Formula:
    """Base class of every STL node."""

    __slots__ = ()

    def children(self) -> Tuple["Formula", ...]:
        return ()


# (coefficient, variable); variable None marks a constant term
Term = Tuple[float, Optional[str]]


@dataclass(frozen=True)
class Atomic(Formula):
    """Atomic predicate ``lhs op rhs`` where ``lhs`` is an affine expression.

    A bare boolean signal such as ``radar_rear.detect_obstacle`` has ``op`` and
    ``rhs`` set to ``None`` and holds when the channel is non-zero.
    """

    lhs: Tuple[Term, ...]
    op: Optional[str] = None
    rhs: Optional[float] = None

    def __post_init__(self):
        if not self.lhs:
            raise ValueError("atomic predicate needs a left-hand side")
        if self.op is None:
            if self.rhs is not None or len(self.lhs) != 1 or self.lhs[0][1] is None:
                raise ValueError("a bare predicate must be a single variable")
        elif self.op not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")
        elif self.rhs is None:
            raise ValueError("comparison needs a right-hand constant")

    @classmethod
    def of(cls, var: str, op: Optional[str] = None, rhs: Optional[float] = None) -> "Atomic":
        return cls(((1.0, var),), op, None if rhs is None else float(rhs))

    @property
    def variables(self) -> Tuple[str, ...]:
        return tuple(v for _, v in self.lhs if v is not None)


@dataclass(frozen=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True)
class Placeholder(Formula):
    """The template symbol that stands in for any atomic predicate."""


@dataclass(frozen=True)
class Not(Formula):
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


# interval None means untimed: the operator ranges over the rest of the trace
@dataclass(frozen=True)
class Globally(Formula):
    interval: Optional[Interval]
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Finally(Formula):
    interval: Optional[Interval]
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Until(Formula):
    interval: Optional[Interval]
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


TEMPORAL = (Globally, Finally, Until)
BINARY = (And, Or, Implies)


def true() -> Formula:
    return Not(Bottom())


def walk(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal, left to right."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def atoms(f: Formula) -> Iterator[Atomic]:
    return (n for n in walk(f) if isinstance(n, Atomic))


def size(f: Formula) -> int:
    return sum(1 for _ in walk(f))


def depth(f: Formula) -> int:
    kids = f.children()
    return 1 + (max(depth(c) for c in kids) if kids else 0)


def map_atoms(f: Formula, fn) -> Formula:
    """Rebuild ``f`` with every atomic leaf replaced by ``fn(leaf)``."""
    if isinstance(f, Atomic):
        return fn(f)
    if isinstance(f, Not):
        return Not(map_atoms(f.child, fn))
    if isinstance(f, BINARY):
        return type(f)(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, (Globally, Finally)):
        return type(f)(f.interval, map_atoms(f.child, fn))
    if isinstance(f, Until):
        return Until(f.interval, map_atoms(f.left, fn), map_atoms(f.right, fn))
    return f


def desugar(f: Formula) -> Formula:
    """Rewrite Or/Implies into the core connectives Not/And."""
    if isinstance(f, Not):
        return Not(desugar(f.child))
    if isinstance(f, And):
        return And(desugar(f.left), desugar(f.right))
    if isinstance(f, Or):
        return Not(And(Not(desugar(f.left)), Not(desugar(f.right))))
    if isinstance(f, Implies):
        return Not(And(desugar(f.left), Not(desugar(f.right))))
    if isinstance(f, (Globally, Finally)):
        return type(f)(f.interval, desugar(f.child))
    if isinstance(f, Until):
        return Until(f.interval, desugar(f.left), desugar(f.right))
    return f
