import random
import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from restl.stl import Signal, parse  # noqa: E402
from restl.stl.sampler import random_formula, random_signal  # noqa: E402


@st.composite
def formulas(draw, max_depth=4, variables=("x", "y", "z")):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_formula(random.Random(seed), max_depth=max_depth, variables=variables)


@st.composite
def signals(draw, variables=("x", "y", "z"), max_len=20):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_signal(random.Random(seed), variables, max_len)


@pytest.fixture
def gear():
    return parse("G[0,21](velocity > 40 -> F[1,4](RPM < 2500))")


@pytest.fixture
def compliant_trace():
    return Signal.constant(1.0, 25.0, velocity=50.0, RPM=2000.0)


@pytest.fixture
def violating_trace():
    return Signal.constant(1.0, 25.0, velocity=50.0, RPM=3000.0)


@pytest.fixture
def case_formulas():
    """(reference, prediction) text for the three documented error cases."""
    return {
        1: ("G[10,150]((z1 < 0.2) -> G[1,3](z2 < 0.3))", "G[10,150]((z1 < 0.2) -> F[1,3](z2 < 0.3))"),
        2: ("G[0,T]((radar_rear.detect_obstacle & gear_rev = 1) -> F[0,2](brake_rear = 1))",
            "G[0,T](radar_rear.detect_obstacle -> F[0,2](brake_rear = 1))"),
        3: ("G[0,2](T > 22) & F[2,4](T > 30)",
            "G[0,120](T > 22) & F[0,240](T > 30) & G[120,240](T > 30)"),
    }


_ACCEPTANCE = []


def record_acceptance(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
