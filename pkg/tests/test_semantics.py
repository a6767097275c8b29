import numpy as np
import pytest
from hypothesis import given, settings

from conftest import formulas, signals
from oracles import brute_eval
from restl.stl import (
    And,
    Atomic,
    Finally,
    Globally,
    Interval,
    Not,
    Or,
    Signal,
    SignalError,
    Until,
    check,
    evaluate,
    load_signal_csv,
    parse,
    trace,
    true,
)
from restl.stl.semantics import window_offsets


def test_gear_traces(gear, compliant_trace, violating_trace):
    assert evaluate(gear, compliant_trace, 0) is True
    assert evaluate(gear, violating_trace, 0) is False
    assert brute_eval(gear, compliant_trace) is True
    assert brute_eval(gear, violating_trace) is False


def test_check_is_evaluate_at_zero(gear, compliant_trace):
    assert check(gear, compliant_trace) == evaluate(gear, compliant_trace, 0)


def test_tautology():
    s = Signal(1.0, {"x": np.array([-1.0, 0.0, 3.0])})
    x = Atomic.of("x", ">", 0)
    assert check(Or(x, Not(x)), s)


@settings(max_examples=300, deadline=None)
@given(formulas(), signals())
def test_matches_brute_force_everywhere(f, s):
    got = trace(f, s)
    want = [brute_eval(f, s, t) for t in range(s.length)]
    assert got.tolist() == want


@settings(max_examples=200, deadline=None)
@given(formulas(max_depth=3), formulas(max_depth=3), signals())
def test_de_morgan(a, b, s):
    assert np.array_equal(trace(Not(And(a, b)), s), trace(Or(Not(a), Not(b)), s))


@settings(max_examples=200, deadline=None)
@given(formulas(max_depth=3), signals())
def test_negation(f, s):
    assert np.array_equal(trace(Not(f), s), ~trace(f, s))


@settings(max_examples=200, deadline=None)
@given(formulas(max_depth=3), signals())
def test_f_g_duality_and_until_subsumption(f, s):
    iv = Interval(1, 4)
    assert np.array_equal(trace(Finally(iv, f), s), trace(Not(Globally(iv, Not(f))), s))
    assert np.array_equal(trace(Finally(iv, f), s), trace(Until(iv, true(), f), s))


@settings(max_examples=200, deadline=None)
@given(formulas(max_depth=3), signals())
def test_monotone_windows(f, s):
    wide = trace(Globally(Interval(0, 6), f), s)
    narrow = trace(Globally(Interval(1, 4), f), s)
    assert np.all(narrow[wide])


def test_empty_window_convention():
    s = Signal(1.0, {"x": np.zeros(3)})
    x = Atomic.of("x", ">", 0)
    # window [5,6] lies beyond the last sample
    assert evaluate(Globally(Interval(5, 6), x), s, 0) is True
    assert evaluate(Finally(Interval(5, 6), Not(x)), s, 0) is False


def test_until_needs_left_through_witness():
    s = Signal(1.0, {"a": np.array([1.0, 1.0, 0.0, 0.0]), "b": np.array([0.0, 0.0, 1.0, 0.0])})
    a, b = Atomic.of("a"), Atomic.of("b")
    # left must also hold at the witness time, which it does not at t=2
    assert evaluate(Until(Interval(0, 3), a, b), s, 0) is False
    s2 = Signal(1.0, {"a": np.array([1.0, 1.0, 1.0, 0.0]), "b": np.array([0.0, 0.0, 1.0, 0.0])})
    assert evaluate(Until(Interval(0, 3), a, b), s2, 0) is True


def test_window_offsets_fractional_dt():
    assert window_offsets(Interval(1, 3), 2.0) == (1, 1)
    assert window_offsets(Interval(1, 3), 0.5) == (2, 6)


def test_symbolic_horizon_resolution():
    f = parse("G[0,T](x > 0)")
    s = Signal(1.0, {"x": np.array([1.0, 1.0, -1.0])})
    assert evaluate(f, s, 0, {"T": 1}) is True
    assert evaluate(f, s, 0, {"T": 2}) is False
    with pytest.raises(Exception):
        evaluate(f, s, 0)


def test_errors():
    s = Signal(1.0, {"x": np.zeros(3)})
    with pytest.raises(SignalError):
        evaluate(parse("y > 0"), s)
    with pytest.raises(Exception):
        evaluate(parse("x > 0"), s, 3)
    with pytest.raises(SignalError):
        Signal(0.0, {"x": np.zeros(2)})
    with pytest.raises(SignalError):
        Signal(1.0, {"x": np.zeros(2), "y": np.zeros(3)})


def test_signal_constant_length():
    assert Signal.constant(1.0, 25.0, v=1.0).length == 26
    assert Signal.constant(0.5, 2.0, v=1.0).length == 5


def test_load_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("time,x,y\n0,1,2\n0.5,3,4\n1.0,5,6\n")
    s = load_signal_csv(p)
    assert s.dt == 0.5 and s.length == 3 and s["y"].tolist() == [2, 4, 6]


@pytest.mark.parametrize("body", ["", "t,x\n0,1\n", "time,x\n0,1\n1,2\n3,4\n", "time,x\n0,1\n0,2\n", "time,x\n0,abc\n"])
def test_load_csv_rejects(tmp_path, body):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(SignalError):
        load_signal_csv(p)
