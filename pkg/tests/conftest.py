import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mwumech import AuctionInstance, SingleMinded, Additive

settings.register_profile(
    "ci", max_examples=40, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")


@pytest.fixture
def two_by_two():
    """Two single-minded bidders on disjoint singletons of two items."""
    return AuctionInstance(2, (SingleMinded((0,), 5.0), SingleMinded((1,), 3.0)))


@pytest.fixture
def triangle():
    """Three bidders on cyclic item pairs: the LP optimum is (1/2, 1/2, 1/2)."""
    return AuctionInstance(3, (SingleMinded((0, 1), 4.0), SingleMinded((1, 2), 4.0), SingleMinded((0, 2), 4.0)))


@pytest.fixture
def additive_pair():
    return AuctionInstance(2, (Additive((3.0, 1.0)), Additive((1.0, 3.0))))


def random_feasible_point(instance, rng):
    V = instance.vertices()
    return rng.dirichlet(np.ones(len(V))) @ V


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
