import numpy as np
import pytest
from hypothesis import settings

from sfdist.config import load_config
from sfdist.network import five_agent_cycle
from sfdist.perturbation import DitherDistribution
from sfdist.problem import Ball, NoiseModel, ProblemSpec, Quadratic

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

SHIFTS = (3.0, 2.0, 1.0, 0.0, -1.0)


@pytest.fixture(scope="session")
def sec5():
    return load_config("sec5")


@pytest.fixture(scope="session")
def five_agent_problem():
    ball = Ball([0.0], 100.0)
    return ProblemSpec(
        [Quadratic([s]) for s in SHIFTS],
        [ball] * 5,
        NoiseModel("gaussian", 1.0),
        optimum=[1.0],
    )


@pytest.fixture(scope="session")
def cycle():
    return five_agent_cycle()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def dither():
    return DitherDistribution("two-interval", 0.5, 1.0)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line, print it, and fail the test when it did not pass."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2}  {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        request.config.stash[_VERDICTS].append((number, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda t: t[0]):
        terminalreporter.write_line(line)
