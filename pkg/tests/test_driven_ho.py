import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from adiabath import driven_ho as dho
from adiabath.grid import Grid, PhysicalParams, default_grid, hermite_function
from adiabath.model import DrivenFamily, Schedule
from adiabath.propagator import overlap_track, propagate, tdse_residual_parts


def _a_p_quad(R, params, t):
    # independent oracle: adaptive quadrature of the response integral
    w, m = params.omega, params.m
    re = quad(lambda s: R(s) * math.cos(w * (t - s)), 0, t, limit=200)[0]
    im = quad(lambda s: -R(s) * math.sin(w * (t - s)), 0, t, limit=200)[0]
    return 1j * complex(re, im) / (m * w)


def test_a_p_constant_drive_closed_form(params):
    for t in (0.3, 2.0, 7.5):
        got = dho.compute_a_p(Schedule.constant(0.2), params, t).a_p
        assert got == pytest.approx(0.2 * (1 - np.exp(-1j * t)), abs=1e-10)


def test_a_p_zero_at_start_and_for_zero_drive(params, drive_schedule):
    assert dho.compute_a_p(drive_schedule, params, 0.0).a_p == 0
    assert dho.compute_a_p(Schedule.constant(0.0), params, 5.0).a_p == 0


@given(st.floats(0.1, 60.0))
def test_a_p_matches_adaptive_quadrature(t):
    params = PhysicalParams()
    s = Schedule("cos_ramp", eps_R=0.05, Omega=0.2)
    assert dho.compute_a_p(s, params, t).a_p == pytest.approx(_a_p_quad(lambda u: float(s.R(u)), params, t), abs=1e-10)


def test_a_p_simpson_converges_at_fourth_order(params):
    s = Schedule("cos_ramp", eps_R=0.05, Omega=0.3)
    t = 2 * math.pi
    ref = dho.compute_a_p(s, params, t, 8192).a_p
    e1 = abs(dho.compute_a_p(s, params, t, 32).a_p - ref)
    e2 = abs(dho.compute_a_p(s, params, t, 64).a_p - ref)
    assert e1 / e2 == pytest.approx(16.0, rel=0.1)


def test_a_p_rejects_odd_interval_counts(params, drive_schedule):
    with pytest.raises(ValueError):
        dho.compute_a_p(drive_schedule, params, 1.0, 33)


def test_drive_must_be_callable(params):
    with pytest.raises(TypeError):
        dho.compute_a_p(0.3, params, 1.0)


def test_long_spans_get_more_quadrature_points(params):
    assert dho.default_n_quad(params, 1.0) == 512
    assert dho.default_n_quad(params, 628.0) >= 64 * 628


@pytest.mark.parametrize("x_init,v_init", [(0.0, 0.0), (0.4, -0.2)])
def test_classical_trajectory_solves_newton(params, x_init, v_init):
    s = Schedule("linear_ramp", eps_R=0.1, Omega=0.3)
    sol = solve_ivp(
        lambda t, y: [y[1], -y[0] + float(s.R(t))], (0, 12), [x_init, v_init], rtol=1e-11, atol=1e-12, dense_output=True
    )
    for t in (1.0, 6.0, 12.0):
        tr = dho.classical_trajectory(s, params, t, x_init, v_init)
        xe, ve = sol.sol(t)
        assert tr.xi == pytest.approx(xe, abs=1e-8) and tr.xi_dot == pytest.approx(ve, abs=1e-8)


def test_undriven_candidate_is_stationary_oscillator_state(params, grid):
    for n in range(4):
        for t in (0.0, 1.3):
            got = dho.psi_exact(n, params, Schedule.constant(0.0), t, grid).amplitudes
            exact = hermite_function(n, 1.0, 0.0, grid).amplitudes * np.exp(-1j * (n + 0.5) * t)
            assert np.max(np.abs(got - exact)) < 1e-12


def test_hermite_polynomials_match_closed_forms():
    z = np.array([0.3 + 0.2j, -1.1, 2.0])
    H = dho.hermite_polynomials(4, z)
    np.testing.assert_allclose(H[2], 4 * z**2 - 2)
    np.testing.assert_allclose(H[4], 16 * z**4 - 48 * z**2 + 12)
    with pytest.raises(ValueError):
        dho.hermite_polynomials(16, z)


@pytest.fixture(scope="module")
def fast_drive():
    return Schedule("cos_ramp", eps_R=0.2, Omega=0.3)


def test_candidate_centre_is_real_part_of_a_p(params, grid, fast_drive):
    for t in (1.0, 4.0, 9.0):
        a = dho.compute_a_p(fast_drive, params, t).a_p
        for n in range(3):
            assert dho.psi_exact(n, params, fast_drive, t, grid).expectation_x() == pytest.approx(a.real, abs=1e-10)


def test_candidate_obeys_ehrenfest(params, grid, fast_drive):
    h = 0.01
    for t in (2.0, 5.0):
        x = [dho.psi_exact(0, params, fast_drive, t + k * h, grid).expectation_x() for k in (-1, 0, 1)]
        acc = (x[0] - 2 * x[1] + x[2]) / h**2
        assert acc == pytest.approx(-x[1] + float(fast_drive.R(t)), abs=1e-4)


def test_ground_candidate_solves_tdse_up_to_a_factor(params, grid, fast_drive):
    fam = DrivenFamily(grid, params, fast_drive)
    r = tdse_residual_parts(lambda s: dho.psi_exact(0, params, fast_drive, s, grid), fam, 5.0, 1e-3)
    assert r.orthogonal < 1e-4
    assert r.parallel > 10 * r.orthogonal


@pytest.mark.parametrize("omega", [1.0, 2.0])
def test_instantaneous_eigenpairs(omega):
    params = PhysicalParams(omega=omega)
    g = default_grid(params)
    for R in (0.0, 0.3):
        system = dho.instantaneous_eigen(params, R, 2, g)
        for n in range(3):
            phi = dho.phi_instantaneous(n, params, R, g)
            assert abs(np.sum(g.weights * np.conj(phi.amplitudes) * system.states[n].amplitudes)) > 1 - 1e-6
            assert system.lambdas[n] == pytest.approx(dho.energy_eigenvalue(n, params, R), abs=1e-4 * omega)
            assert phi.expectation_x() == pytest.approx(R / omega**2, abs=1e-12)


def test_energy_conventions(params):
    assert dho.energy_eigenvalue(0, params, 0.0, "as_printed") == pytest.approx(0.25)
    assert dho.energy_eigenvalue(0, params, 0.0, "as_derived") == pytest.approx(0.5)
    assert dho.energy_eigenvalue(2, params, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        dho.energy_eigenvalue(0, params, 0.0, "other")


def test_driven_invariant_eigenstates_are_boosted_hermite_functions(params, grid):
    tr = dho.Trajectory(t=1.0, xi=0.7, xi_dot=-0.4)
    system = dho.driven_invariant_eigen(params, tr, 3, grid)
    for n in range(4):
        exact = dho.invariant_state(n, params, tr.xi, tr.xi_dot, grid)
        assert abs(np.sum(grid.weights * np.conj(exact.amplitudes) * system.states[n].amplitudes)) > 1 - 1e-5
        assert system.lambdas[n] == pytest.approx(n + 0.5, abs=1e-4)


def test_invariant_state_is_carried_by_the_evolution():
    # fast drive and a boosted start: the H eigenstate is left behind, the invariant one is not
    params = PhysicalParams()
    g = Grid(-12, 12, 1024)
    s = Schedule("linear_ramp", eps_R=0.1, Omega=0.3)
    inv = dho.invariant_references(params, s, 1, g, x_init=0.0, v_init=0.3)
    ins = dho.instantaneous_references(params, s, 1, g)
    run = propagate(inv[0].state(0.0), DrivenFamily(g, params, s), 0.0, 6.0, 1e-3, store_every=500)
    d_inv = overlap_track(run, inv[0]).max_deficit
    d_H = overlap_track(run, ins[0]).max_deficit
    assert d_inv < 1e-5
    assert d_H > 1e-2


def test_berry_connection_of_real_eigenfunctions(params, grid):
    for n in range(5):
        c = dho.berry_connection(n, params, 0.2, grid=grid)
        lo, up = dho.ladder_coefficients(n, params)
        assert abs(c.diagonal) < 1e-10
        assert abs(c.lower - lo) < 1e-6 and abs(c.upper - up) < 1e-6
        assert c.remainder < 1e-6


def test_berry_connection_needs_grid_and_level(params, grid):
    with pytest.raises(ValueError):
        dho.berry_connection(0, params, 0.0)
    with pytest.raises(ValueError):
        dho.berry_connection(-1, params, 0.0, grid=grid)


def test_berry_phase_vanishes_on_open_and_closed_paths(params, grid, drive_schedule):
    for path in (drive_schedule, Schedule("linear_ramp", eps_R=0.05, Omega=0.01), lambda t: 0.1 * np.sin(t)):
        for n in (0, 3):
            assert abs(dho.berry_phase(n, params, path, 10.0, grid, n_steps=50)) < 1e-8
