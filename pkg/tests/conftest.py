from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ellipccp.estimators import EstimatorBundle, estimate
from ellipccp.io import read_samples, read_spec

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

DATA = Path(__file__).resolve().parents[1] / "src" / "ellipccp" / "data"

A_ROWS = np.array([[12.0, 2.0, 4.0], [7.0, 5.0, 12.0], [2.0, 4.0, 3.5]])
B_RHS = np.array([1000.0, 1500.0, 750.0])
C_MEAN = np.array([50.0, 70.0, 70.0])


def bundle(mean, cov, N, sample_id="s"):
    """Estimator bundle with prescribed moments, bypassing any sample."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        cov = np.diag(cov)
    return EstimatorBundle(mean=mean, scatter=cov * (N - 1), unbiased_cov=cov, N=N, sample_id=sample_id)


def load_example(name):
    """(spec, estimators) for a shipped example spec file."""
    spec, paths = read_spec(DATA / name)
    samples = {s.id: s for s in map(read_samples, paths)}
    return spec, {k: estimate(v) for k, v in samples.items()}


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def example1_det():
    return load_example("example1_deterministic.spec")


@pytest.fixture(scope="session")
def example1():
    return load_example("example1.spec")


@pytest.fixture(scope="session")
def example2():
    return load_example("example2.spec")


@pytest.fixture(scope="session")
def example3():
    return load_example("example3.spec")


@pytest.fixture(scope="session")
def example4():
    return load_example("example4.spec")


# --- acceptance criterion lines ----------------------------------------------

CRITERIA = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records and prints one PASS/FAIL line, then asserts ok."""

    def record(k, ok, detail):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[k] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
