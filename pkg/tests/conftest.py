import numpy as np
import pytest

from boxhaz.data_io import SimulationSpec, build_partition, simulate
from boxhaz.model import SurvivalDataset, TimePartition


def random_instance(rng, n_max=10, J_max=3, p_max=3, positive_k=True):
    """Small random dataset and partition covering it."""
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    J = int(rng.integers(1, J_max + 1))
    y = rng.exponential(1.0, n)
    nu = rng.integers(0, 2, n)
    Z = rng.normal(0.0, 1.0, (n, p))
    if positive_k:
        Z[:, 0] = rng.uniform(0.5, 2.0, n)
    inner = np.sort(rng.uniform(0.0, y.max(), J - 1))
    s = np.concatenate([[0.0], inner, [1.1 * y.max() + 1e-9]])
    if np.any(np.diff(s) <= 0):
        s = np.linspace(0.0, 1.1 * y.max() + 1e-9, J + 1)
    return SurvivalDataset(y, nu, Z), TimePartition(s)


@pytest.fixture(scope="session")
def sim300():
    """Default simulation design at n = 300 without censoring."""
    return simulate(SimulationSpec(n=300, censoring="none", seed=11)).data


@pytest.fixture(scope="session")
def sim300_part(sim300):
    return build_partition(sim300, 1)


@pytest.fixture
def one_subject():
    return SurvivalDataset([2.0], [1], [[1.0]])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in mod.RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
