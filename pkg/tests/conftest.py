import numpy as np
import pytest

from pcal.geom import PointCloud, normalize_cloud

# one line per release criterion, filled by tests/test_acceptance.py and
# echoed after the run summary so the verdicts survive output capture
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_cloud(rng):
    return normalize_cloud(PointCloud(positions=rng.normal(size=(128, 3))))


def plane_cloud(n=200, seed=0):
    r = np.random.default_rng(seed)
    pts = np.zeros((n, 3))
    pts[:, :2] = r.uniform(-1, 1, size=(n, 2))
    return PointCloud(positions=pts)


def sphere_cloud(n=300, seed=0):
    r = np.random.default_rng(seed)
    v = r.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return PointCloud(positions=v)
