"""Shared test configuration for logsync tests."""

import pytest

from logsync.models import PhysicalConstants, SolverSettings
from logsync.spacetime import Metric


def pytest_addoption(parser):
    """Add command line options for pytest."""
    parser.addoption(
        "--fast",
        action="store_true",
        help="Skip tests marked slow (acceptance grids and long steering runs)",
    )


def pytest_collection_modifyitems(config, items):
    """Skip slow tests when --fast is given."""
    if not config.getoption("--fast"):
        return
    skip = pytest.mark.skip(reason="--fast given")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def geometric():
    """Toy constants with c = G = 1."""
    return PhysicalConstants.geometric()


@pytest.fixture(scope="session")
def flat(geometric):
    """Flat metric in toy units."""
    return Metric.flat(geometric)


@pytest.fixture(scope="session")
def settings():
    """Default solver settings."""
    return SolverSettings()


@pytest.fixture
def curved(geometric):
    """Factory for Fermi normal metrics in toy units."""

    def make(mu: float) -> Metric:
        return Metric.fermi_normal(mu, geometric)

    return make
