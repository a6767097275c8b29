"""Boolean monitoring of STL formulas over uniformly sampled signals.

Time is discrete: a window ``[l, u]`` seen from sample ``t`` covers the sample
indices whose timestamps fall in ``[t*dt + l, t*dt + u]`` (both ends
inclusive). Windows that run past the end of the trace are clipped; an empty
clipped window makes ``G`` vacuously true and ``F``/``U`` false.

The evaluator works bottom-up over whole traces with numpy, producing the
verdict at every sample index in one pass.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .syntax import (
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
)

log = logging.getLogger(__name__)

_EPS = 1e-9


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    """Multi-channel trace sampled every ``dt`` time units starting at 0."""

    dt: float
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise SignalError(f"time step must be positive, got {self.dt}")
        if not self.channels:
            raise SignalError("signal has no channels")
        arrays = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        lengths = {len(a) for a in arrays.values()}
        if len(lengths) != 1 or 0 in lengths:
            raise SignalError(f"channels must share one non-zero length, got {sorted(lengths)}")
        for a in arrays.values():
            a.setflags(write=False)
        object.__setattr__(self, "channels", arrays)

    @classmethod
    def constant(cls, dt: float, horizon: float, **values: float) -> "Signal":
        n = int(math.floor(horizon / dt + _EPS)) + 1
        return cls(dt, {k: np.full(n, float(v)) for k, v in values.items()})

    @property
    def length(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def horizon(self) -> float:
        return (self.length - 1) * self.dt

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise SignalError(f"signal has no channel {name!r}") from None


def load_signal_csv(path) -> Signal:
    """Read a ``time,var1,var2,...`` CSV with strictly increasing uniform time."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SignalError(f"{path}: empty file") from None
        if not header or header[0] != "time" or len(header) < 2:
            raise SignalError(f"{path}: header must be 'time,<var>,...'")
        rows = [r for r in reader if any(c.strip() for c in r)]
    if not rows:
        raise SignalError(f"{path}: no samples")
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise SignalError(f"{path}: {exc}") from None
    if data.shape[1] != len(header):
        raise SignalError(f"{path}: rows do not match header width")
    times = data[:, 0]
    if abs(times[0]) > _EPS:
        raise SignalError(f"{path}: time must start at 0")
    if len(times) == 1:
        dt = 1.0
    else:
        steps = np.diff(times)
        dt = float(steps[0])
        if dt <= 0 or np.any(steps <= 0):
            raise SignalError(f"{path}: time must be strictly increasing")
        if np.any(np.abs(steps - dt) > 1e-9 * max(abs(dt), 1.0)):
            raise SignalError(f"{path}: time steps are not uniform")
    return Signal(dt, {name: data[:, i] for i, name in enumerate(header) if i > 0})


def window_offsets(interval: Optional[Interval], dt: float, horizons=None):
    """Sample offsets ``(a, b)`` covered by an interval; ``b`` may be inf."""
    if interval is None:
        return 0, math.inf
    lo, hi = interval.resolve(horizons)
    return int(math.ceil(lo / dt - _EPS)), int(math.floor(hi / dt + _EPS))


def _compare(values: np.ndarray, op: str, rhs: float) -> np.ndarray:
    if op == ">":
        return values > rhs
    if op == ">=":
        return values >= rhs
    if op == "<":
        return values < rhs
    if op == "<=":
        return values <= rhs
    return values == rhs


def _prefix(mask: np.ndarray) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(mask, dtype=np.int64)))


def _window_bounds(n: int, a: int, b: float):
    idx = np.arange(n)
    start = idx + a
    stop = np.minimum(idx + b, n - 1) if math.isfinite(b) else np.full(n, n - 1)
    return start, stop.astype(np.int64)


def _globally(child: np.ndarray, a: int, b: float) -> np.ndarray:
    n = len(child)
    start, stop = _window_bounds(n, a, b)
    empty = start > stop
    if empty.any():
        log.debug("G window clipped to empty at %d sample(s)", int(empty.sum()))
    bad = _prefix(~child)
    s = np.minimum(start, n)
    e = np.where(empty, s, stop + 1)
    return empty | (bad[e] - bad[s] == 0)


def _finally(child: np.ndarray, a: int, b: float) -> np.ndarray:
    n = len(child)
    start, stop = _window_bounds(n, a, b)
    empty = start > stop
    if empty.any():
        log.debug("F window clipped to empty at %d sample(s)", int(empty.sum()))
    good = _prefix(child)
    s = np.minimum(start, n)
    e = np.where(empty, s, stop + 1)
    return ~empty & (good[e] - good[s] > 0)


def _until(left: np.ndarray, right: np.ndarray, a: int, b: float) -> np.ndarray:
    n = len(left)
    # first index >= t where left fails (n if none)
    first_bad = np.empty(n, dtype=np.int64)
    nxt = n
    for t in range(n - 1, -1, -1):
        if not left[t]:
            nxt = t
        first_bad[t] = nxt
    start, stop = _window_bounds(n, a, b)
    # the witness t' needs left on all of [t, t'], so t' < first_bad[t]
    stop = np.minimum(stop, first_bad - 1)
    empty = start > stop
    good = _prefix(right)
    s = np.minimum(start, n)
    e = np.where(empty, s, stop + 1)
    return ~empty & (good[e] - good[s] > 0)


def trace(f: Formula, s: Signal, horizons: Optional[Dict[str, float]] = None) -> np.ndarray:
    """Verdict of ``f`` at every sample index of ``s``."""
    n = s.length
    if isinstance(f, Atomic):
        value = np.zeros(n)
        for coef, var in f.lhs:
            value = value + (coef if var is None else coef * s[var])
        if f.op is None:
            return value != 0
        return _compare(value, f.op, f.rhs)
    if isinstance(f, Bottom):
        return np.zeros(n, dtype=bool)
    if isinstance(f, Placeholder):
        raise ValueError("cannot evaluate a template placeholder")
    if isinstance(f, Not):
        return ~trace(f.child, s, horizons)
    if isinstance(f, And):
        return trace(f.left, s, horizons) & trace(f.right, s, horizons)
    if isinstance(f, Or):
        return trace(f.left, s, horizons) | trace(f.right, s, horizons)
    if isinstance(f, Implies):
        return ~trace(f.left, s, horizons) | trace(f.right, s, horizons)
    if isinstance(f, Globally):
        a, b = window_offsets(f.interval, s.dt, horizons)
        return _globally(trace(f.child, s, horizons), a, b)
    if isinstance(f, Finally):
        a, b = window_offsets(f.interval, s.dt, horizons)
        return _finally(trace(f.child, s, horizons), a, b)
    if isinstance(f, Until):
        a, b = window_offsets(f.interval, s.dt, horizons)
        return _until(trace(f.left, s, horizons), trace(f.right, s, horizons), a, b)
    raise TypeError(f"not a formula: {f!r}")


def evaluate(f: Formula, s: Signal, t: int = 0, horizons: Optional[Dict[str, float]] = None) -> bool:
    """Does ``s`` satisfy ``f`` at sample index ``t``?"""
    if not 0 <= t < s.length:
        raise SignalError(f"sample index {t} outside [0, {s.length - 1}]")
    return bool(trace(f, s, horizons)[t])


def check(f: Formula, s: Signal, horizons: Optional[Dict[str, float]] = None) -> bool:
    return evaluate(f, s, 0, horizons)
