import numpy as np
import pytest

from txselect.data import ExperimentDataset


def step_dataset(seed=0, n=2000, noise=0.1, M=2, base=1.0):
    """One treatment whose effect is +1 where f1 > 0 and -1 elsewhere."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, M))
    v = rng.integers(0, 2, size=n)
    effect = np.where(X[:, 0] > 0, 1.0, -1.0)
    y = base + v * effect + rng.normal(0, noise, size=n)
    return ExperimentDataset(np.arange(n), X, v, y[:, None], n_treatments=1)


def homogeneous_dataset(seed=0, n=4000, effect=2.0, noise=5.0, M=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, M))
    v = rng.integers(0, 2, size=n)
    y = 10.0 + effect * v + rng.normal(0, noise, size=n)
    return ExperimentDataset(np.arange(n), X, v, y[:, None], n_treatments=1)


@pytest.fixture
def step_ds():
    return step_dataset()


@pytest.fixture
def small_sim():
    from txselect.simulate import SimConfig, generate_dataset

    return generate_dataset(SimConfig(n=3000, seed=3, uncertainty_weight=0.5))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
