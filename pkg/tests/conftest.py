import numpy as np
import pytest

from compmap.attack import InProcessOracle
from compmap.cipher import PUBLISHED_KEY, sample_key
from compmap.errors import KeyRejected


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def usable_key(rng, M, N):
    """Sample keys until one produces usable keystreams for an M x N image."""
    for _ in range(100):
        key = sample_key(rng)
        try:
            key.keystreams(M, N)
        except KeyRejected:
            continue
        return key
    raise RuntimeError("key sampler keeps producing unusable keys")


@pytest.fixture(scope="session")
def published_oracle_512():
    return InProcessOracle(PUBLISHED_KEY, 512, 512)


@pytest.fixture(scope="session")
def published_keystreams_64():
    return PUBLISHED_KEY.keystreams(64, 64)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
