import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stabtune.l0logreg import Dataset

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile("default")


def random_logistic_data(n, p, seed, signal=(1.5, -1.0)):
    """Gaussian features with a logistic target on the first few columns."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    eta = x[:, : len(signal)] @ np.asarray(signal[:p])
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(int)
    return Dataset(x, y)


@pytest.fixture
def small_data():
    return random_logistic_data(80, 8, 0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
