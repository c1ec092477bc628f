"""Shared fixtures.

Expensive assemblies are session-scoped so each is run once per test session.
"""
import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import time  # noqa: E402

import pytest  # noqa: E402

from pddsparse.bench import BenchConfig, assemble_from_config  # noqa: E402

# reference desk configuration: [-10, 10]^2, H = 5, dz = 0.25, three elongation knots
REF = BenchConfig(L=20.0, m=4, n=4, elongation=3, samples=50_000, timestep=1e-2, seed=20240601)
# iteration-count configuration, N = 2205
ITER = BenchConfig(L=40.0, m=8, n=4, elongation=3, samples=10_000, timestep=1e-2, seed=11,
                   problem="harmonic-data")
# small system for dense and full-rank checks, N = 93
TOY = BenchConfig(L=8.0, m=4, n=2, elongation=3, samples=2000, timestep=1e-2, seed=3)

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Register one acceptance criterion outcome for the terminal summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)


class Assembled:
    def __init__(self, cfg, modes):
        t0 = time.perf_counter()
        self.cfg = cfg
        self.disc, self.problem, self.systems = assemble_from_config(cfg, modes)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def toy():
    return Assembled(TOY, ("rbf", "sinc"))


@pytest.fixture(scope="session")
def ref():
    return Assembled(REF, ("rbf", "sinc"))


@pytest.fixture(scope="session")
def iter_system():
    return Assembled(ITER, ("rbf",))


@pytest.fixture(scope="session")
def scenarios():
    from pddsparse.bench import default_scenarios, run_scenario

    t0 = time.perf_counter()
    sweeps = {k: run_scenario(spec) for k, spec in default_scenarios().items()}
    return sweeps, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
