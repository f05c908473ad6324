from __future__ import annotations

import numpy as np
import pytest

from mirrortrain.config import ExperimentConfig
from mirrortrain.features import extract_features
from mirrortrain.humansim import ImperfectionParams
from mirrortrain.pipeline import simulate_session


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig(cohort_size=2, master_seed=7)


@pytest.fixture(scope="session")
def simulated(config):
    """One default-parameter participant: (session, ground-truth log)."""
    return simulate_session(config, 0)


@pytest.fixture(scope="session")
def session(simulated):
    return simulated[0]


@pytest.fixture(scope="session")
def features(session):
    return extract_features(session.emg, session.frame_times)


@pytest.fixture(scope="session")
def noiseless_config():
    return ExperimentConfig(cohort_size=2, master_seed=3, imperfections=ImperfectionParams())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture
def record_criterion():
    def record(number: int, title: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (title, bool(ok), detail)
        print(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")
