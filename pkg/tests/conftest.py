import pytest

from supersol.domain import DomainSpec, build_grid
from supersol.problem import ProblemSpec


@pytest.fixture(scope="session")
def unit_interval():
    return DomainSpec.interval(0, 1)


@pytest.fixture(scope="session")
def interval_grid(unit_interval):
    return build_grid(unit_interval, 1 / 256)


@pytest.fixture(scope="session")
def logistic(unit_interval):
    """The reference degenerate problem: lambda=10, m=1, a=d, f=u^2, g=1."""
    return ProblemSpec.from_strings(unit_interval, 10, m="1", a="d", g="1", f="u^2")
