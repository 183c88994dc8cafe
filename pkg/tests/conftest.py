"""Shared fixtures and the acceptance-report terminal hook."""

import numpy as np
import pytest

from mtssm.gof import simulate_dataset
from mtssm.model import ExperimentDesign, MeasurementParams

# (criterion number, passed, one-line detail) tuples appended by
# tests/test_acceptance.py and echoed after the run.
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status} — {detail}")


@pytest.fixture
def meas100():
    return MeasurementParams(2.75, 0.75, 100.0, 100.0)


@pytest.fixture
def design_k2():
    """Balanced two-level categorical design over 4 trials."""
    return ExperimentDesign.from_levels([1, 1, 2, 2], kind="categorical")


@pytest.fixture
def small_dataset(meas100, design_k2):
    """Simulated 3x4x21 dataset with known generating parameters."""
    theta = np.array([0.8, -0.5])
    return simulate_dataset(theta, design_k2, meas100,
                            n_subjects=3, n_steps=21, seed=42), theta
