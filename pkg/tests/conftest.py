import numpy as np
import pytest

from cdkpop.instances import example_fixture, union_balls_fixture
from cdkpop.polycore import MomentSequence

# printed optimal pseudo-moments of the two-variable example at order one
EXAMPLE_Y1 = (1.0, 1.6562, 2.0833, 3.3124, 3.4061, 4.4997)


def example_y1() -> MomentSequence:
    return MomentSequence(2, 2, np.array(EXAMPLE_Y1))


@pytest.fixture(scope="session")
def example_pop():
    return example_fixture()


@pytest.fixture(scope="session")
def balls_pop():
    return union_balls_fixture()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
