import math

import numpy as np
import pytest

from adiabath.grid import Grid, hermite_function, inner_product
from adiabath.invariant import (
    DegeneracyError,
    build_invariant,
    check_conjugation_identity,
    commutator_norm_with_h2,
    eigen_invariant,
    lvn_difference_error,
    lvn_residual,
    spectral_sweep,
    tridiagonal_eigh,
)
from adiabath.model import OperatorMatrix, Schedule, build_h1, build_h2
from adiabath.transform import apply_U

from conftest import GENERIC_T


def test_invariant_equals_conjugated_h1(generic_schedule, params, grid, harmonic):
    assert check_conjugation_identity(generic_schedule, params, harmonic, GENERIC_T, grid) < 1e-5


def test_invariant_at_identity_is_h1(params, grid, harmonic):
    I = build_invariant(grid, params, harmonic, Schedule.constant(), 2.0)
    assert (I - build_h1(grid, params, harmonic)).max_abs() == 0.0


def test_lvn_residual_floor_order_and_control(generic_schedule, params, grid, harmonic):
    t = GENERIC_T
    e1, e2 = (lvn_difference_error(generic_schedule, params, harmonic, t, h, 2e-3, grid) for h in (0.8, 0.4))
    floor = lvn_residual(generic_schedule, params, harmonic, t, 2e-3, grid)
    control = lvn_residual(generic_schedule, params, harmonic, t, 2e-3, grid, hamiltonian="H1")
    assert floor < 1e-5
    assert abs(math.log2(e1 / e2) - 2.0) < 0.25
    assert floor / control < 0.1


def test_lvn_rejects_unknown_hamiltonian(generic_schedule, params, grid, harmonic):
    with pytest.raises(ValueError):
        lvn_residual(generic_schedule, params, harmonic, 1.0, 0.1, grid, hamiltonian="H3")


def test_commutator_witness_and_constant(generic_schedule, params, grid, harmonic):
    moving = commutator_norm_with_h2(generic_schedule, params, harmonic, GENERIC_T, grid)
    still = commutator_norm_with_h2(Schedule.constant(), params, harmonic, GENERIC_T, grid)
    assert moving > 1e-3
    assert still < 1e-10


def test_commutator_matches_dense_product(generic_schedule, params, harmonic):
    g = Grid(-8, 8, 101)
    I = build_invariant(g, params, harmonic, generic_schedule, GENERIC_T).entries
    H = build_h2(g, params, harmonic, generic_schedule, GENERIC_T).entries
    dense = np.max(np.abs(I @ H - H @ I))
    assert commutator_norm_with_h2(generic_schedule, params, harmonic, GENERIC_T, g) == pytest.approx(dense, rel=1e-12)


@pytest.fixture(scope="module")
def spectrum(generic_schedule, params, grid, harmonic):
    return eigen_invariant(generic_schedule, params, harmonic, GENERIC_T, 10, grid)


def test_invariant_spectrum_is_oscillator_ladder(spectrum):
    exact = np.arange(11) + 0.5
    assert np.max(np.abs(spectrum.lambdas - exact) / exact) < 1e-4


def test_invariant_eigenstates_orthonormal(spectrum):
    assert np.max(np.abs(spectrum.overlap_matrix() - np.eye(11))) < 1e-10
    assert spectrum.imag_residue < 1e-12


def test_invariant_eigenstates_are_mapped_hermite_functions(spectrum, generic_schedule, params, grid):
    for n in range(4):
        mapped = apply_U(hermite_function(n, params.x0, 0.0, grid), generic_schedule, params, GENERIC_T)
        assert abs(inner_product(mapped, spectrum.states[n])) > 1 - 1e-5


def test_phase_convention(spectrum, params, grid):
    for n, state in enumerate(spectrum.states):
        ov = inner_product(hermite_function(n, params.x0, 0.0, grid), state)
        assert abs(ov.imag) < 1e-12 and ov.real > 0


def test_spectral_sweep_is_time_independent(slow_schedule, params, harmonic):
    g = Grid(-12, 12, 1024)
    lam = spectral_sweep(slow_schedule, params, harmonic, np.linspace(0, 300, 5), 5, g)
    assert lam.shape == (5, 6)
    assert np.max(np.abs(lam - lam[0]) / lam[0]) < 1e-5


def test_degenerate_spectrum_raises():
    g = Grid(0, 1, 16)
    op = OperatorMatrix.hermitian_tridiagonal(g, np.ones(16), np.zeros(15, dtype=complex))
    with pytest.raises(DegeneracyError):
        tridiagonal_eigh(op, 2)


def test_level_limits(params, grid, harmonic):
    with pytest.raises(ValueError):
        eigen_invariant(Schedule.constant(), params, harmonic, 0.0, 21, grid)
