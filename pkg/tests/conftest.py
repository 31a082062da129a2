import numpy as np
import pytest

from copboost.model import Dataset
from copboost.simulation import ScenarioSpec, draw_responses, gen_scenario

# acceptance verdict lines, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_small():
    """Small toy-design dataset with linear learners (fast fits)."""
    sc = ScenarioSpec("toy", n_train=300, n_val=300, n_test=200, p=8, seed=11)
    return gen_scenario(sc)


def make_data(eta, marginals, copula, p, seed, X=None):
    rng = np.random.default_rng(seed)
    n = eta.shape[1]
    if X is None:
        X = rng.uniform(-1, 1, (n, p))
    y = draw_responses(eta, marginals, copula, rng)
    return Dataset(y, X)
