import sys
import numpy as np
import pytest

from aaarisk.dataset import Study


@pytest.fixture
def rng():
    return np.random.default_rng(20110501)


def logistic_study(rng, n=60, beta=(1.0, -0.5, 0.25), intercept=-0.3):
    beta = np.asarray(beta, dtype=float)
    x = rng.standard_normal((n, len(beta)))
    p = 1.0 / (1.0 + np.exp(-(intercept + x @ beta)))
    y = (rng.random(n) < p).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return Study(x, y)


@pytest.fixture
def make_study():
    return logistic_study


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(mod.RESULTS):
        terminalreporter.write_line(mod._line(i))
