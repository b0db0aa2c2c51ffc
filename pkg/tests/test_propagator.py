import math

import numpy as np
import pytest

from adiabath.grid import Grid, Wavefunction, hermite_function
from adiabath.invariant import eigen_invariant, tridiagonal_eigh
from adiabath.model import ClosedFamily, OpenFamily, Schedule, build_h1
from adiabath.propagator import (
    PropagationError,
    ReferenceFamily,
    cn_quasi_energy,
    overlap_track,
    phase_track,
    propagate,
    propagate_batch,
    tdse_residual,
    tdse_residual_parts,
)
from adiabath.runner import _h1_eigenpairs, evolve_candidate

from conftest import DT, GENERIC_T


@pytest.fixture(scope="module")
def ground(params, grid, harmonic):
    lam, states = _h1_eigenpairs(params, grid, harmonic, 1)
    return lam, states


def _still(state, value):
    return ReferenceFamily("still", lambda t: state, lambda t: value)


def test_stationary_state_keeps_fidelity_and_phase(params, grid, harmonic, ground):
    lam, states = ground
    run = propagate(states[0], ClosedFamily(grid, params, harmonic), 0.0, 10.0, DT, method="step")
    assert overlap_track(run, _still(states[0], lam[0])).max_deficit < 1e-8
    # the discrete eigenvalue sets the phase rate; the CN step error is lam^3 dt^2 t / 12
    assert phase_track(run, _still(states[0], lam[0])).max_abs_difference < 1e-5
    assert phase_track(run, _still(states[0], lam[0]), step_corrected=True).max_abs_difference < 1e-10


def test_static_spectral_path_matches_stepping(params, grid, harmonic):
    psi = hermite_function(0, 1.0, 1.5, grid)
    fam = ClosedFamily(grid, params, harmonic)
    a = propagate(psi, fam, 0.0, 2.0, DT, store_every=500, method="step")
    b = propagate(psi, fam, 0.0, 2.0, DT, store_every=500)
    np.testing.assert_allclose(a.times, b.times)
    assert np.max(np.abs(a.states - b.states)) < 1e-10


def test_coherent_state_follows_classical_orbit(params, grid, harmonic):
    # the grid spectrum is slightly anharmonic, so the orbit dephases at O(dx^2)
    psi = hermite_function(0, 1.0, 2.0, grid)
    run = propagate(psi, ClosedFamily(grid, params, harmonic), 0.0, 3.0, DT)
    x = np.array([run.state(k).expectation_x() for k in range(len(run.times))])
    np.testing.assert_allclose(x, 2.0 * np.cos(run.times), atol=5e-4)


def test_norm_is_conserved_under_time_dependent_h(params, grid, harmonic, generic_schedule):
    psi = hermite_function(1, 1.0, 0.0, grid)
    run = propagate(psi, OpenFamily(grid, params, harmonic, generic_schedule), 0.0, 10.0, DT, method="step")
    assert len(run.times) >= 2 and run.times[-1] == pytest.approx(10.0)
    assert run.max_norm_drift() < 1e-10


def test_second_order_in_time_step(params, harmonic, generic_schedule):
    g = Grid(-10, 10, 256)
    fam = OpenFamily(g, params, harmonic, generic_schedule)
    psi = hermite_function(0, 1.0, 0.0, g)
    finals = [propagate(psi, fam, 0.0, 2.0, dt, method="step").state(-1) for dt in (0.04, 0.02, 0.01)]
    ratio = (finals[0] - finals[1]).norm() / (finals[1] - finals[2]).norm()
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_final_step_is_always_stored(params, harmonic):
    g = Grid(-8, 8, 128)
    run = propagate(hermite_function(0, 1.0, 0.0, g), ClosedFamily(g, params, harmonic), 0.0, 0.7, 0.1, store_every=3)
    np.testing.assert_allclose(run.times, [0.0, 0.3, 0.6, 0.7])


def test_rejects_fractional_step_count_and_mismatched_grid(params, harmonic, grid):
    fam = ClosedFamily(grid, params, harmonic)
    psi = hermite_function(0, 1.0, 0.0, grid)
    with pytest.raises(ValueError):
        propagate(psi, fam, 0.0, 1.05, 0.1)
    with pytest.raises(ValueError):
        propagate(hermite_function(0, 1.0, 0.0, Grid(-5, 5, 64)), fam, 0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        propagate(psi, fam, 0.0, 1.0, 0.1, method="rk4")


def test_unnormalizable_blowup_is_reported(params, harmonic):
    g = Grid(-8, 8, 64)
    bad = Wavefunction(g, np.full(64, np.nan, dtype=complex))
    with pytest.raises(PropagationError):
        propagate(bad, OpenFamily(g, params, harmonic, Schedule("cos_ramp", 0.01, 0.05, 0.0, 0.5)), 0.0, 0.1, 0.01)


def test_quasi_energy_limit():
    assert cn_quasi_energy(0.5, 1e-3) == pytest.approx(0.5 - 0.5**3 * 1e-6 / 12, rel=1e-12)


def test_tdse_residual_of_mapped_eigenstate(params, grid, harmonic, generic_schedule):
    lam, states = _h1_eigenpairs(params, grid, harmonic, 0)
    fam = OpenFamily(grid, params, harmonic, generic_schedule)
    good = evolve_candidate(generic_schedule, params, grid, lam[0], states[0])
    wrong = evolve_candidate(generic_schedule, params, grid, lam[0], states[0], shift=1.0)
    r = tdse_residual(good, fam, GENERIC_T, 1e-3)
    assert r < 1e-3
    parts = tdse_residual_parts(wrong, fam, GENERIC_T, 1e-3)
    # a wrong constant phase rate only adds a residual along the state itself
    assert parts.orthogonal < 1e-3 and parts.energy_offset.real == pytest.approx(1.0, abs=1e-3)
    assert r / parts.total < 0.1


@pytest.mark.slow
def test_evolved_states_follow_mapped_eigenstates(evolve_runs):
    _, _, cands, runs = evolve_runs
    for cand, run in zip(cands, runs):
        err = max((run.state(k) - cand(t)).norm() for k, t in enumerate(run.times))
        assert err < 5e-3


@pytest.mark.slow
def test_evolved_states_have_unit_overlap_with_invariant_eigenstates(evolve_runs, params, grid, harmonic, slow_schedule):
    _, _, _, runs = evolve_runs
    ref = [
        ReferenceFamily(
            f"I_{n}",
            lambda t, n=n: eigen_invariant(slow_schedule, params, harmonic, t, 3, grid).states[n],
            lambda t: 0.0,
        )
        for n in range(2)
    ]
    sub = runs[0].times[::10]
    for n in range(2):
        run = runs[n]
        states = [ref[n].state(t) for t in sub]
        mags = [abs(np.sum(grid.weights * np.conj(s.amplitudes) * run.states[10 * k])) for k, s in enumerate(states)]
        assert 1 - min(mags) < 1e-3


def test_phase_is_undefined_at_small_overlap(params, grid, harmonic, ground):
    lam, states = ground
    run = propagate(states[0], ClosedFamily(grid, params, harmonic), 0.0, 1.0, 0.01)
    with pytest.raises(ValueError):
        phase_track(run, _still(states[1], lam[1]))


def test_batch_matches_single_runs(params, harmonic, generic_schedule):
    g = Grid(-10, 10, 256)
    fam = OpenFamily(g, params, harmonic, generic_schedule)
    psis = [hermite_function(n, 1.0, 0.0, g) for n in range(3)]
    batch = propagate_batch(psis, fam, 0.0, 1.0, 0.01)
    for psi, run in zip(psis, batch):
        np.testing.assert_allclose(propagate(psi, fam, 0.0, 1.0, 0.01).states, run.states, atol=1e-14)


def test_discrete_ground_energy_is_close_to_half(params, grid, harmonic):
    w, _ = tridiagonal_eigh(build_h1(grid, params, harmonic), 0)
    assert w[0] == pytest.approx(0.5, abs=1e-4)
