"""Closed-form driven harmonic oscillator: response integral, candidate solutions,
instantaneous eigenpairs, the invariant of the driven system, and Berry quantities.

Hamiltonian: H(t) = p^2/2m + m w^2 x^2 / 2 - x R(t).

With xi(t) a classical trajectory of H(t), the operator

    I(t) = (p - m xi')^2 / 2m + m w^2 (x - xi)^2 / 2

is an exact invariant whose eigenstates are momentum-boosted, displaced
Hermite functions exp(i m xi' (x - xi) / hbar) h_n(x - xi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .grid import Grid, PhysicalParams, Wavefunction, hermite_function, inner_product
from .invariant import InvariantEigenSystem, eigen_system
from .model import OperatorMatrix, Schedule, build_driven_ho, _kinetic_coeffs, _momentum_sup
from .propagator import EigenReference

MAX_HERMITE_ORDER = 15
ENERGY_CONVENTIONS = ("as_printed", "as_derived")


def _drive(R_schedule):
    """Accept a Schedule (its R(t) is used) or any vectorized callable R(t)."""
    if isinstance(R_schedule, Schedule):
        return R_schedule.R
    if callable(R_schedule):
        return R_schedule
    raise TypeError(f"expected a Schedule or a callable R(t), got {type(R_schedule).__name__}")


# -- response integral ------------------------------------------------------------------


@dataclass(frozen=True)
class DrivenResponse:
    t: float
    a_p: complex

    @property
    def a_p_re(self) -> float:
        return self.a_p.real

    @property
    def a_p_im(self) -> float:
        return self.a_p.imag


def default_n_quad(params: PhysicalParams, t: float) -> int:
    """512 intervals, or enough to keep w * h at or below 1/128 on long spans."""
    return max(512, 2 * math.ceil(64 * params.omega * abs(t)))


def compute_a_p(R_schedule, params: PhysicalParams, t: float, n_quad: int | None = None) -> DrivenResponse:
    """a_p(t) = (i / m w) int_0^t R(s) exp(-i w (t - s)) ds by composite Simpson.

    Re a_p is the classical displacement from rest at the origin and
    Im a_p its velocity divided by w.
    """
    t = float(t)
    if n_quad is None:
        n_quad = default_n_quad(params, t)
    if n_quad < 2 or n_quad % 2:
        raise ValueError(f"composite Simpson needs an even n_quad >= 2, got {n_quad}")
    if t == 0.0:
        return DrivenResponse(0.0, 0j)
    R = _drive(R_schedule)
    s = np.linspace(0.0, t, n_quad + 1)
    integrand = np.asarray(R(s), dtype=float) * np.exp(-1j * params.omega * (t - s))
    integral = simpson(integrand.real, x=s) + 1j * simpson(integrand.imag, x=s)
    return DrivenResponse(t, complex(1j * integral / (params.m * params.omega)))


@dataclass(frozen=True)
class Trajectory:
    t: float
    xi: float
    xi_dot: float


def classical_trajectory(
    R_schedule,
    params: PhysicalParams,
    t: float,
    x_init: float = 0.0,
    v_init: float = 0.0,
    n_quad: int | None = None,
) -> Trajectory:
    """Classical solution of m xi'' = -m w^2 xi + R(t) from (x_init, v_init) at t = 0."""
    w = params.omega
    a = compute_a_p(R_schedule, params, t, n_quad).a_p
    c, s = math.cos(w * t), math.sin(w * t)
    return Trajectory(
        t=float(t),
        xi=x_init * c + v_init * s / w + a.real,
        xi_dot=-x_init * w * s + v_init * c + w * a.imag,
    )


# -- the literal candidate solution -----------------------------------------------------


def hermite_polynomials(n: int, z: np.ndarray) -> np.ndarray:
    """Physicists' H_0..H_n at (complex) z by the unnormalized recurrence."""
    if not 0 <= n <= MAX_HERMITE_ORDER:
        raise ValueError(f"Hermite order must lie in [0, {MAX_HERMITE_ORDER}], got {n}")
    z = np.asarray(z)
    out = np.empty((n + 1,) + z.shape, dtype=np.result_type(z, float))
    out[0] = 1.0
    if n >= 1:
        out[1] = 2 * z
    for k in range(1, n):
        out[k + 1] = 2 * z * out[k] - 2 * k * out[k - 1]
    return out


def psi_exact(n: int, params: PhysicalParams, R_schedule, t: float, grid: Grid, n_quad: int | None = None) -> Wavefunction:
    """The closed-form candidate with complex centre a_p(t), taken literally.

    x0^{-1/2} pi^{-1/4} (2^n n!)^{-1/2} e^{-(Im a_p / x0)^2} e^{-i (n + 1/2) w t}
        * exp(-(x - a_p)^2 / 2 x0^2) H_n((x - a_p) / x0)
    """
    if not 0 <= n <= MAX_HERMITE_ORDER:
        raise ValueError(f"Hermite order must lie in [0, {MAX_HERMITE_ORDER}], got {n}")
    x0 = params.x0
    a = compute_a_p(R_schedule, params, t, n_quad).a_p
    z = (grid.x - a) / x0
    norm = x0**-0.5 * math.pi**-0.25 / math.sqrt(2.0**n * math.factorial(n))
    prefactor = norm * math.exp(-((a.imag / x0) ** 2)) * np.exp(-1j * (n + 0.5) * params.omega * t)
    return Wavefunction(grid, prefactor * np.exp(-0.5 * z**2) * hermite_polynomials(n, z)[n])


# -- instantaneous eigenpairs -----------------------------------------------------------


def equilibrium(params: PhysicalParams, R_value: float) -> float:
    return R_value / (params.m * params.omega**2)


def phi_instantaneous(n: int, params: PhysicalParams, R_value: float, grid: Grid) -> Wavefunction:
    """Real Hermite function centred on the equilibrium R / (m w^2)."""
    if not 0 <= n <= MAX_HERMITE_ORDER:
        raise ValueError(f"Hermite order must lie in [0, {MAX_HERMITE_ORDER}], got {n}")
    return hermite_function(n, params.x0, equilibrium(params, R_value), grid)


def energy_eigenvalue(n: int, params: PhysicalParams, R_value: float, convention: str = "as_derived") -> float:
    """Instantaneous level n of H(R).

    as_derived: hbar w (n + 1/2) - R^2 / (2 m w^2) from completing the square.
    as_printed: (hbar / 2)(n + 1/2) - R^2 / (2 m w^2), the variant that drops w
    and carries an extra factor 1/2 on the quantum term.
    """
    shift = R_value**2 / (2 * params.m * params.omega**2)
    if convention == "as_derived":
        return params.hbar * params.omega * (n + 0.5) - shift
    if convention == "as_printed":
        return 0.5 * params.hbar * (n + 0.5) - shift
    raise ValueError(f"convention must be one of {ENERGY_CONVENTIONS}, got {convention!r}")


def instantaneous_eigen(params: PhysicalParams, R_value: float, n_max: int, grid: Grid) -> InvariantEigenSystem:
    """Discrete eigenpairs of the driven Hamiltonian at fixed R, phased against the Hermite functions."""
    op = build_driven_ho(grid, params, R_value)
    reference = np.stack(
        [phi_instantaneous(k, params, R_value, grid).amplitudes for k in range(n_max + 1)], axis=1
    )
    return eigen_system(op, n_max, reference, 0.0, "<Phi_n(R)|phi_n> real positive")


# -- the driven invariant ---------------------------------------------------------------


def driven_invariant_bands(grid: Grid, params: PhysicalParams, xi: float, xi_dot: float):
    """Bands of (P - m xi')^2/2m + m w^2 (X - xi)^2 / 2."""
    kd, ko = _kinetic_coeffs(grid, params)
    m = params.m
    diag = kd + 0.5 * m * xi_dot**2 + 0.5 * m * params.omega**2 * (grid.x - xi) ** 2
    sup = np.full(grid.n_points - 1, ko - xi_dot * _momentum_sup(grid, params), dtype=complex)
    return diag, sup


def build_driven_invariant(grid: Grid, params: PhysicalParams, xi: float, xi_dot: float) -> OperatorMatrix:
    return OperatorMatrix.hermitian_tridiagonal(grid, *driven_invariant_bands(grid, params, xi, xi_dot))


def invariant_state(n: int, params: PhysicalParams, xi: float, xi_dot: float, grid: Grid) -> Wavefunction:
    """exp(i m xi' (x - xi) / hbar) h_n(x - xi)."""
    h = hermite_function(n, params.x0, xi, grid)
    boost = np.exp(1j * params.m * xi_dot * (grid.x - xi) / params.hbar)
    return Wavefunction(grid, boost * h.amplitudes)


def driven_invariant_eigen(
    params: PhysicalParams, trajectory: Trajectory, n_max: int, grid: Grid
) -> InvariantEigenSystem:
    op = build_driven_invariant(grid, params, trajectory.xi, trajectory.xi_dot)
    reference = np.stack(
        [invariant_state(k, params, trajectory.xi, trajectory.xi_dot, grid).amplitudes for k in range(n_max + 1)],
        axis=1,
    )
    return eigen_system(op, n_max, reference, trajectory.t, "<boosted h_n|phi_n> real positive")


# -- reference families for overlap tracking --------------------------------------------


def invariant_references(
    params: PhysicalParams,
    R_schedule,
    n_max: int,
    grid: Grid,
    x_init: float | None = None,
    v_init: float = 0.0,
    n_quad: int | None = None,
) -> list[EigenReference]:
    """Discrete invariant eigenstates phi_n(t), n = 0..n_max, sharing one eigensolve per t.

    The trajectory starts at the equilibrium of H(0) unless x_init is given.
    """
    R = _drive(R_schedule)
    if x_init is None:
        x_init = equilibrium(params, float(R(0.0)))

    @lru_cache(maxsize=None)
    def system(t):
        return driven_invariant_eigen(params, classical_trajectory(R, params, t, x_init, v_init, n_quad), n_max, grid)

    return [
        EigenReference(f"invariant_eigenstate({n})", lambda t, n=n: (system(t).lambdas[n], system(t).states[n]))
        for n in range(n_max + 1)
    ]


def instantaneous_references(params: PhysicalParams, R_schedule, n_max: int, grid: Grid) -> list[EigenReference]:
    """Discrete eigenstates of H(R(t)), n = 0..n_max."""
    R = _drive(R_schedule)

    @lru_cache(maxsize=None)
    def system(t):
        return instantaneous_eigen(params, float(R(t)), n_max, grid)

    return [
        EigenReference(f"instantaneous_H_eigenstate({n})", lambda t, n=n: (system(t).lambdas[n], system(t).states[n]))
        for n in range(n_max + 1)
    ]


# -- Berry quantities -------------------------------------------------------------------


@dataclass(frozen=True)
class BerryConnection:
    """<Phi_k(R)| d/dR Phi_n(R)> for k = n, n - 1, n + 1, and what the three leave out."""

    n: int
    R: float
    diagonal: complex
    lower: complex  # k = n - 1 (zero for n = 0)
    upper: complex  # k = n + 1
    remainder: float  # L2 norm of d/dR Phi_n outside span{Phi_{n-1}, Phi_n, Phi_{n+1}}


def default_dR(params: PhysicalParams) -> float:
    return 1e-4 * params.m * params.omega**2 * params.x0


def berry_connection(
    n: int, params: PhysicalParams, R_value: float, dR: float | None = None, grid: Grid | None = None
) -> BerryConnection:
    """Centred difference in R of the instantaneous eigenfunction, projected on its neighbours."""
    if n < 0:
        raise ValueError(f"level must be non-negative, got {n}")
    if grid is None:
        raise ValueError("a grid is required")
    dR = default_dR(params) if dR is None else dR
    plus = phi_instantaneous(n, params, R_value + dR, grid)
    minus = phi_instantaneous(n, params, R_value - dR, grid)
    deriv = (plus - minus) * (1.0 / (2 * dR))
    phi = phi_instantaneous(n, params, R_value, grid)
    up = phi_instantaneous(n + 1, params, R_value, grid)
    diagonal = inner_product(phi, deriv)
    upper = inner_product(up, deriv)
    rest = deriv - phi * diagonal - up * upper
    lower = 0j
    if n > 0:
        down = phi_instantaneous(n - 1, params, R_value, grid)
        lower = inner_product(down, deriv)
        rest = rest - down * lower
    return BerryConnection(n, float(R_value), diagonal, lower, upper, rest.norm())


def ladder_coefficients(n: int, params: PhysicalParams) -> tuple[float, float]:
    """Analytic (<Phi_{n-1}|d_R Phi_n>, <Phi_{n+1}|d_R Phi_n>), from d_R = -(1/m w^2) d_x."""
    scale = params.m * params.omega**2 * params.x0
    return -math.sqrt(n / 2) / scale, math.sqrt((n + 1) / 2) / scale


def berry_phase(
    n: int,
    params: PhysicalParams,
    R_path,
    t_final: float,
    grid: Grid,
    n_steps: int = 200,
    dR: float | None = None,
) -> float:
    """gamma_n = i int_0^{t_final} <Phi_n|d_R Phi_n> R'(t) dt by the trapezoid rule.

    R'(t) is taken from the Schedule when available, otherwise by centred
    difference of the path.
    """
    R = _drive(R_path)
    t = np.linspace(0.0, float(t_final), n_steps + 1)
    if isinstance(R_path, Schedule):
        R_dot = np.asarray(R_path.R_dot(t), dtype=float)
    else:
        h = 1e-5 * max(1.0, abs(float(t_final)))
        R_dot = (np.asarray(R(t + h)) - np.asarray(R(t - h))) / (2 * h)
    values = np.asarray(R(t), dtype=float)
    conn = np.array([berry_connection(n, params, r, dR, grid).diagonal for r in values])
    gamma = 1j * np.trapezoid(conn * R_dot, t)
    return float(gamma.real)
