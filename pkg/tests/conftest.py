import os
import sys

import numpy as np
import pytest

# Add project root to sys.path so tests can import main and modules
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if PROJECT_ROOT not in sys.path:
    sys.path.append(PROJECT_ROOT)


def pytest_configure(config):
    """
    Runs before test collection.
    Pins the runtime settings so a developer's .env cannot change tolerances,
    thread counts or output locations during the test session.
    """
    print("configured pytest: pinning ISOELAST settings for test session.")

    os.environ["ISOELAST_THREADS"] = "2"
    os.environ["ISOELAST_LOG_LEVEL"] = "WARNING"
    os.environ["ISOELAST_INFSUP_MAX_DOFS"] = "5000"
    os.environ["ISOELAST_SOLVER_RESIDUAL_TOL"] = "1e-9"

    for key in ("ISOELAST_OUTPUT_DIR", "ISOELAST_NEWTON_TOL", "ISOELAST_NEWTON_MAX_ITER"):
        os.environ.pop(key, None)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return path
