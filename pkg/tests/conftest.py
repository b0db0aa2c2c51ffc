"""Shared fixtures. The full-period propagation runs are computed once per session."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adiabath.grid import PhysicalParams, default_grid
from adiabath.model import OpenFamily, PotentialSpec, Schedule
from adiabath.propagator import propagate_batch
from adiabath.runner import _h1_eigenpairs, evolve_candidate, theorem_runs

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DT = 1e-3


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def grid(params):
    return default_grid(params)


@pytest.fixture(scope="session")
def harmonic(params):
    return PotentialSpec.harmonic(params)


@pytest.fixture(scope="session")
def generic_schedule():
    """Fast enough that every term of H2 and I is exercised at a single time."""
    return Schedule("cos_ramp", eps_alpha=0.01, eps_beta=0.05, eps_R=0.05, Omega=0.5)


GENERIC_T = 4.0


@pytest.fixture(scope="session")
def slow_schedule():
    return Schedule("cos_ramp", eps_alpha=0.01, eps_beta=0.05, eps_R=0.05, Omega=0.01)


def full_period(schedule, dt=DT):
    return round(schedule.period / dt) * dt


@pytest.fixture(scope="session")
def evolve_runs(params, grid, harmonic, slow_schedule):
    """H2 propagation of U-mapped H1 eigenstates n = 0..3 over one slow period."""
    lam, states = _h1_eigenpairs(params, grid, harmonic, 3)
    cands = [evolve_candidate(slow_schedule, params, grid, lam[n], states[n]) for n in range(4)]
    fam = OpenFamily(grid, params, harmonic, slow_schedule)
    t1 = full_period(slow_schedule)
    runs = propagate_batch([c(0.0) for c in cands], fam, 0.0, t1, DT, store_every=round(t1 / DT) // 100 + 1)
    return lam, states, cands, runs


@pytest.fixture(scope="session")
def drive_schedule():
    return Schedule("cos_ramp", eps_R=0.05, Omega=0.01)


@pytest.fixture(scope="session")
def theorem_result(params, grid, drive_schedule):
    return theorem_runs(params, drive_schedule, grid, 0.0, full_period(drive_schedule), DT, n_max=3)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
