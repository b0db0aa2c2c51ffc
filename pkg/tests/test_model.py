import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adiabath.grid import ConfigurationError, Grid, PhysicalParams, hermite_function
from adiabath.model import (
    ClosedFamily,
    DrivenFamily,
    OpenFamily,
    OperatorMatrix,
    PotentialSpec,
    Schedule,
    build_driven_ho,
    build_generator,
    build_h1,
    build_h2,
    commutator,
    kinetic_matrix,
    momentum_matrix,
    position_matrix,
)
from adiabath.invariant import build_invariant

FAMILIES = ("cos_ramp", "linear_ramp")
times = st.floats(0.0, 50.0)
eps = st.floats(-0.1, 0.1)


def test_schedule_rejects_unknown_family():
    with pytest.raises(ConfigurationError):
        Schedule("sawtooth")


def test_schedule_rejects_nonpositive_omega():
    with pytest.raises(ConfigurationError):
        Schedule("cos_ramp", 0.01, 0.0, 0.0, Omega=0.0)


@given(st.sampled_from(FAMILIES), eps, eps, eps, st.floats(0.01, 1.0), times)
def test_schedule_derivatives_match_differences(family, ea, eb, eR, W, t):
    s = Schedule(family, ea, eb, eR, W)
    h = 1e-5
    for f, df in ((s.alpha, s.alpha_dot), (s.alpha_dot, s.alpha_ddot), (s.beta, s.beta_dot),
                  (s.beta_dot, s.beta_ddot), (s.R, s.R_dot)):
        fd = (f(t + h) - f(t - h)) / (2 * h)
        assert fd == pytest.approx(float(df(t)), abs=1e-8)


def test_schedules_start_at_identity():
    for family in FAMILIES:
        s = Schedule(family, 0.02, 0.03, 0.04, 0.1, R0=0.5)
        assert s.alpha(0.0) == 0.0 and s.beta(0.0) == 0.0 and s.R(0.0) == 0.5


def test_constant_schedule():
    s = Schedule.constant(0.3)
    assert s.is_static
    t = np.linspace(0, 10, 5)
    assert np.all(s.alpha(t) == 0) and np.all(s.beta_dot(t) == 0)
    assert np.all(s.R(t) == 0.3)


def test_adiabaticity_warns_for_fast_schedules():
    p = PhysicalParams()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Schedule("cos_ramp", 0.01, 0.05, 0.0, 0.01).adiabaticity(p)
    with pytest.warns(UserWarning):
        Schedule("cos_ramp", 0.0, 1.0, 0.0, 1.0).adiabaticity(p)


def test_tabulated_potential_reproduces_quadratic():
    q = np.linspace(-20, 20, 81)
    V = PotentialSpec.tabulated(q, 0.5 * q**2)
    x = np.linspace(-19.9, 19.9, 333)
    np.testing.assert_allclose(V(x), 0.5 * x**2, atol=1e-9)


def test_tabulated_potential_domain_and_validation():
    q = np.linspace(-2, 2, 9)
    V = PotentialSpec.tabulated(q, q**2)
    with pytest.raises(ConfigurationError):
        V(np.array([2.5]))
    with pytest.raises(ConfigurationError):
        PotentialSpec.tabulated(q[::-1], q**2)
    with pytest.raises(ConfigurationError):
        PotentialSpec.tabulated(q[:3], q[:3])
    g = Grid(-3, 3, 64)
    with pytest.raises(ConfigurationError):
        build_h1(g, PhysicalParams(), V)


@pytest.fixture(scope="module")
def small():
    p = PhysicalParams()
    return p, Grid(-10, 10, 401), PotentialSpec.harmonic(p)


@given(st.sampled_from(FAMILIES), times)
def test_grid_operators_are_hermitian_tridiagonal(small, family, t):
    p, g, V = small
    s = Schedule(family, 0.01, 0.05, 0.05, 0.2)
    for op in (build_h1(g, p, V), build_h2(g, p, V, s, t), build_invariant(g, p, V, s, t), build_generator(g, p, s, t)):
        assert op.is_tridiagonal
        assert op.hermiticity_residual() == 0.0


@given(st.sampled_from(FAMILIES), times)
def test_open_hamiltonian_splits_into_invariant_plus_generator(small, family, t):
    p, g, V = small
    s = Schedule(family, 0.02, 0.05, 0.0, 0.3)
    H2 = build_h2(g, p, V, s, t)
    rest = build_invariant(g, p, V, s, t) + build_generator(g, p, s, t)
    assert (H2 - rest).max_abs() < 1e-10 * H2.max_abs()


def test_constant_schedule_reduces_h2_to_h1(small):
    p, g, V = small
    H2 = build_h2(g, p, V, Schedule.constant(), 3.0)
    assert (H2 - build_h1(g, p, V)).max_abs() == 0.0


def test_kinetic_stencil_symbol():
    # interior rows of K act on a plane wave as (1 - cos k dx) / dx^2
    p = PhysicalParams()
    g = Grid(0, 10, 501)
    k = 3.0
    wave = np.exp(1j * k * g.x)
    out = kinetic_matrix(g, p).matvec(wave)
    symbol = (1 - math.cos(k * g.dx)) / g.dx**2
    np.testing.assert_allclose(out[1:-1], symbol * wave[1:-1], rtol=1e-10)


def test_momentum_stencil_symbol():
    p = PhysicalParams()
    g = Grid(0, 10, 501)
    k = 2.0
    wave = np.exp(1j * k * g.x)
    out = momentum_matrix(g, p).matvec(wave)
    np.testing.assert_allclose(out[1:-1], math.sin(k * g.dx) / g.dx * wave[1:-1], rtol=1e-10)


def test_canonical_commutator_on_resolved_states():
    p = PhysicalParams()
    g = Grid(-10, 10, 1001)
    X, P = position_matrix(g), momentum_matrix(g, p)
    c = commutator(X, P)
    h = hermite_function(1, 1.0, 0.0, g).amplitudes
    np.testing.assert_allclose(c.matvec(h), 1j * h, atol=2e-3)


def test_operator_algebra(small):
    p, g, V = small
    H = build_h1(g, p, V)
    v = hermite_function(2, 1.0, 0.1, g).amplitudes
    np.testing.assert_allclose(H.matvec(v), H.entries @ v, atol=1e-12)
    np.testing.assert_allclose((2.0 * H).matvec(v), 2 * H.matvec(v), atol=1e-12)
    assert (H.adjoint() - H).max_abs() == 0.0
    dense = OperatorMatrix(g, H.entries)
    assert (dense - H).max_abs() == 0.0
    block = np.stack([v, 1j * v], axis=1)
    np.testing.assert_allclose(H.matvec(block)[:, 1], 1j * H.matvec(v), atol=1e-12)


def test_families_match_builders(small):
    p, g, V = small
    s = Schedule("cos_ramp", 0.01, 0.05, 0.05, 0.2)
    t = np.array([0.5, 1.5])
    d, o = OpenFamily(g, p, V, s).bands(t)
    for k, tk in enumerate(t):
        _, diag, sup = build_h2(g, p, V, s, tk).bands
        np.testing.assert_allclose(d[k], diag.real, atol=1e-12)
        np.testing.assert_allclose(o[k], sup, atol=1e-12)
    d, o = DrivenFamily(g, p, s).bands(t)
    _, diag, _ = build_driven_ho(g, p, float(s.R(t[1]))).bands
    np.testing.assert_allclose(d[1], diag.real, atol=1e-12)
    assert ClosedFamily(g, p, V).is_static and not OpenFamily(g, p, V, s).is_static
    assert DrivenFamily(g, p, Schedule.constant(0.2)).is_static
