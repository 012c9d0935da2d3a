import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_graph(rng, N, p=0.3):
    upper = np.triu(rng.random((N, N)) < p, k=1)
    return (upper | upper.T).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_triangles():
    W = np.zeros((6, 6), dtype=np.uint8)
    for block in ((0, 1, 2), (3, 4, 5)):
        for i in block:
            for j in block:
                if i != j:
                    W[i, j] = 1
    return W


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
