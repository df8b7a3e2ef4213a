import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vinit.bundle import Extrinsics
from vinit.geometry import exp_so3
from vinit.simulate import NoiseConfig, TrajectoryConfig, simulate_dataset

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def extrinsics():
    return Extrinsics(exp_so3([0.1, -0.2, 1.5]), np.array([0.05, -0.02, 0.03]))


@pytest.fixture(scope="session")
def clean_bundle(extrinsics):
    """Noise-free, bias-free synthetic data with s_true = 2."""
    return simulate_dataset(TrajectoryConfig(seed=3), NoiseConfig(), 2.0, extrinsics)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
