import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nph.patterns import MemoryStore

settings.register_profile(
    "nph", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("nph")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_store(d, M, seed):
    X = np.random.default_rng(seed).standard_normal((d, M))
    return MemoryStore(X / np.linalg.norm(X, axis=0))


def orthonormal(d, M, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, M)))
    return MemoryStore(q)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for res in sorted(RESULTS, key=lambda r: r.number):
        terminalreporter.write_line(res.line())
