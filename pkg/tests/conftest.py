import numpy as np
import pytest

from mccrobust.model import GaussianMixtureSpec, InputSpec, generate_scalar_dataset

_ACCEPTANCE_LINES = []


def outlier_dataset(seed, mu_u=10.0, mu_v=10.0, alpha=0.15, n=1000, w0=3.0):
    u = GaussianMixtureSpec(alpha, mu_u, 0.001)
    v = GaussianMixtureSpec(alpha, mu_v, 0.001)
    return generate_scalar_dataset(w0, InputSpec("two-interval"), u, v, n, seed)


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
