import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ganas.benchmark import synth_benchmark
from ganas.graph import chain_space, nb101_space

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SIX_OPS = [f"op{i}" for i in range(6)]
TEN_OPS = [f"op{i}" for i in range(10)]

# criterion lines printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def chain81():
    """4-position, 3-op chain benchmark (81 cells)."""
    return synth_benchmark(chain_space(4, ["a", "b", "c"]), seed=1, roughness=0.3)


@pytest.fixture(scope="session")
def chain81_smooth():
    return synth_benchmark(chain_space(4, ["a", "b", "c"]), seed=1, roughness=0.0)


@pytest.fixture(scope="session")
def small_dag():
    """Free-DAG space with up to 4 nodes and 2 operators."""
    space = nb101_space(4, 6, ops=["a", "b"])
    return synth_benchmark(space, seed=2, roughness=0.3)


@pytest.fixture(scope="session")
def dag19k():
    """The 19,535-cell benchmark used by the search acceptance checks."""
    return synth_benchmark(nb101_space(5, 9, ops=SIX_OPS), seed=0, roughness=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
