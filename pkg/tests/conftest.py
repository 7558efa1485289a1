import numpy as np
import pytest

from optdmp.config import RunConfig
from optdmp.dynamics import example_system, single_integrator


@pytest.fixture(scope="session")
def sys2():
    return example_system()


@pytest.fixture(scope="session")
def integrator():
    return single_integrator(1)


@pytest.fixture(scope="session")
def example_cfg():
    return RunConfig.example()


@pytest.fixture(scope="session")
def example_setup(example_cfg):
    return example_cfg.setup()


@pytest.fixture(scope="session")
def anchor_55(example_setup):
    """Anchor at the start point of the benchmark (one backward solve, ~3 s)."""
    return example_setup.build_anchor(np.array([5.0, 5.0]))
