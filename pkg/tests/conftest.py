import time

import pytest

from passloc.geometry import paper_default
from passloc.harness import ExperimentSpec, simulate_trials

N_TRIALS = 500

# filled by test_acceptance, printed at the end of the run
CRITERIA_LINES = []


@pytest.fixture(scope="session")
def scenario():
    return paper_default()


@pytest.fixture(scope="session")
def parametric_trials(scenario):
    t0 = time.perf_counter()
    ts = simulate_trials(ExperimentSpec(scenario, "parametric", N_TRIALS, seed=2024))
    return ts, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sample_trials(scenario):
    """Both particle variants on the same 500 trial seeds, with wall-clock totals."""
    out = {}
    for algo in ("sample+pso", "sample-pso"):
        t0 = time.perf_counter()
        ts = simulate_trials(ExperimentSpec(scenario, algo, N_TRIALS, seed=2024))
        out[algo] = (ts, time.perf_counter() - t0)
    return out


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
