"""The (alpha, beta) canonical map, its unitary image U and checks of the U identities.

U acts in position space as

    (U psi)(x) = e^{a/2} exp(-i m a' e^{2a} x^2 / 2 hbar) psi(e^{a} x - b),

with psi evaluated off-grid by 4-point Lagrange interpolation and zero
extension. U^dagger is the inverse pointwise map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import (
    ConfigurationError,
    Grid,
    PhysicalParams,
    Wavefunction,
    compressed_max_norm,
    probe_basis,
)
from .model import (
    OperatorMatrix,
    PotentialSpec,
    Schedule,
    build_generator,
    build_h1,
    build_h2,
    momentum_matrix,
)

# mapped arguments may leave the grid by at most this fraction of its length
PAD_FRACTION = 0.25


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ValueError("phase point components must be finite")


def _coeffs(schedule: Schedule, t: float):
    return (
        float(schedule.alpha(t)),
        float(schedule.alpha_dot(t)),
        float(schedule.beta(t)),
    )


def classical_forward(point: PhasePoint, schedule: Schedule, params: PhysicalParams, t: float) -> PhasePoint:
    """(q, p) -> (Q, P)."""
    a, ad, b = _coeffs(schedule, t)
    s = point.q + b
    return PhasePoint(math.exp(-a) * s, math.exp(a) * point.p - params.m * ad * math.exp(a) * s)


def classical_inverse(point: PhasePoint, schedule: Schedule, params: PhysicalParams, t: float) -> PhasePoint:
    """(Q, P) -> (q, p)."""
    a, ad, b = _coeffs(schedule, t)
    return PhasePoint(
        math.exp(a) * point.q - b,
        math.exp(-a) * point.p + params.m * ad * math.exp(a) * point.q,
    )


def analytic_jacobian(schedule: Schedule, params: PhysicalParams, t: float) -> float:
    """dQ/dq dP/dp - dQ/dp dP/dq of the forward map; identically e^{-a} e^{a}."""
    a, ad, _ = _coeffs(schedule, t)
    dQ_dq, dQ_dp = math.exp(-a), 0.0
    dP_dq, dP_dp = -params.m * ad * math.exp(a), math.exp(a)
    return dQ_dq * dP_dp - dQ_dp * dP_dq


def numerical_jacobian(mapping, point: PhasePoint, h: float = 1e-5) -> float:
    """Centred finite-difference Jacobian determinant of a phase-space map."""
    def diff(dq, dp):
        plus = mapping(PhasePoint(point.q + dq, point.p + dp))
        minus = mapping(PhasePoint(point.q - dq, point.p - dp))
        return (plus.q - minus.q) / (2 * h), (plus.p - minus.p) / (2 * h)

    dQ_dq, dP_dq = diff(h, 0.0)
    dQ_dp, dP_dp = diff(0.0, h)
    return dQ_dq * dP_dp - dQ_dp * dP_dq


# -- off-grid evaluation ----------------------------------------------------------------


def lagrange_weights(grid: Grid, y: np.ndarray):
    """Indices (n, 4) and weights (n, 4) of cubic Lagrange interpolation at points y.

    Nodes outside the grid get zero weight (zero extension). Points further than
    PAD_FRACTION of the grid length outside it are a configuration error.
    """
    y = np.asarray(y, dtype=float)
    pad = PAD_FRACTION * (grid.x_max - grid.x_min)
    if y.min() < grid.x_min - pad or y.max() > grid.x_max + pad:
        raise ConfigurationError(
            f"mapped arguments [{y.min():.6g}, {y.max():.6g}] exceed the padded grid "
            f"[{grid.x_min - pad:.6g}, {grid.x_max + pad:.6g}]"
        )
    s = (y - grid.x_min) / grid.dx
    j = np.floor(s)
    f = s - j
    j = j.astype(np.int64)
    w = np.stack(
        [
            -f * (f - 1) * (f - 2) / 6,
            (f + 1) * (f - 1) * (f - 2) / 2,
            -(f + 1) * f * (f - 2) / 2,
            (f + 1) * f * (f - 1) / 6,
        ],
        axis=1,
    )
    idx = j[:, None] + np.arange(-1, 3)[None, :]
    outside = (idx < 0) | (idx >= grid.n_points)
    w[outside] = 0.0
    return np.clip(idx, 0, grid.n_points - 1), w


def _is_identity(a: float, ad: float, b: float) -> bool:
    return a == 0.0 and ad == 0.0 and b == 0.0


def _map_data(schedule: Schedule, params: PhysicalParams, t: float, grid: Grid, inverse: bool):
    """Prefactor per grid point and the points at which the input is sampled."""
    a, ad, b = _coeffs(schedule, t)
    x = grid.x
    chirp = params.m * ad * math.exp(2 * a) / (2 * params.hbar)
    if not inverse:
        y = math.exp(a) * x - b
        factor = math.exp(a / 2) * np.exp(-1j * chirp * x**2)
    else:
        y = (x + b) * math.exp(-a)
        factor = math.exp(-a / 2) * np.exp(1j * chirp * y**2)
    return (a, ad, b), factor, y


def _push(values: np.ndarray, schedule, params, t, grid: Grid, inverse: bool) -> np.ndarray:
    coeffs, factor, y = _map_data(schedule, params, t, grid, inverse)
    values = np.asarray(values, dtype=complex)
    if _is_identity(*coeffs):
        return values.copy()
    idx, w = lagrange_weights(grid, y)
    if values.ndim == 1:
        return factor * np.sum(w * values[idx], axis=1)
    return factor[:, None] * np.einsum("ik,ikc->ic", w, values[idx])


def apply_U(psi: Wavefunction, schedule: Schedule, params: PhysicalParams, t: float) -> Wavefunction:
    return Wavefunction(psi.grid, _push(psi.amplitudes, schedule, params, t, psi.grid, inverse=False))


def apply_U_dagger(Psi: Wavefunction, schedule: Schedule, params: PhysicalParams, t: float) -> Wavefunction:
    return Wavefunction(Psi.grid, _push(Psi.amplitudes, schedule, params, t, Psi.grid, inverse=True))


def _sparse_map(schedule, params, t, grid: Grid, inverse: bool) -> OperatorMatrix:
    coeffs, factor, y = _map_data(schedule, params, t, grid, inverse)
    n = grid.n_points
    if _is_identity(*coeffs):
        return OperatorMatrix(grid, sparse=sp.identity(n, dtype=complex, format="csr"))
    idx, w = lagrange_weights(grid, y)
    rows = np.repeat(np.arange(n), 4)
    data = (factor[:, None] * w).ravel()
    mat = sp.csr_matrix((data, (rows, idx.ravel())), shape=(n, n))
    mat.sum_duplicates()
    return OperatorMatrix(grid, sparse=mat)


def matrix_of_U(schedule: Schedule, params: PhysicalParams, t: float, grid: Grid) -> OperatorMatrix:
    """Columns are apply_U of the grid delta functions (sparse, 4 entries per row)."""
    return _sparse_map(schedule, params, t, grid, inverse=False)


def matrix_of_U_dagger(schedule: Schedule, params: PhysicalParams, t: float, grid: Grid) -> OperatorMatrix:
    """Matrix of the inverse map apply_U_dagger."""
    return _sparse_map(schedule, params, t, grid, inverse=True)


# -- identity residuals -----------------------------------------------------------------


@dataclass(frozen=True)
class ConjugationResiduals:
    r_q: float
    r_p: float
    unitarity: float
    dx: float


def unitarity_residual(schedule, params, t, grid: Grid, n_probe: int | None = None) -> float:
    """Resolved-subspace max norm of U^H U - 1 with U^H the conjugate transpose."""
    U = matrix_of_U(schedule, params, t, grid)
    UH = U.adjoint()
    basis = _basis(params, grid, n_probe)
    return compressed_max_norm(lambda v: UH.matvec(U.matvec(v)) - v, basis, grid)


def _basis(params, grid, n_probe):
    return probe_basis(params, grid) if n_probe is None else probe_basis(params, grid, n_probe)


def check_conjugation(schedule, params, t, grid: Grid, n_probe: int | None = None) -> ConjugationResiduals:
    """Residuals of U X U^dag = e^{a} X - b and U P U^dag = e^{-a} P + m a' e^{a} X."""
    a, ad, b = _coeffs(schedule, t)
    U = matrix_of_U(schedule, params, t, grid)
    Ud = matrix_of_U_dagger(schedule, params, t, grid)
    P = momentum_matrix(grid, params)
    x = grid.x[:, None]
    basis = _basis(params, grid, n_probe)

    def res_q(v):
        return U.matvec(x * Ud.matvec(v)) - (math.exp(a) * x - b) * v

    def res_p(v):
        lhs = U.matvec(P.matvec(Ud.matvec(v)))
        return lhs - (math.exp(-a) * P.matvec(v) + params.m * ad * math.exp(a) * x * v)

    return ConjugationResiduals(
        r_q=compressed_max_norm(res_q, basis, grid),
        r_p=compressed_max_norm(res_p, basis, grid),
        unitarity=unitarity_residual(schedule, params, t, grid, n_probe),
        dx=grid.dx,
    )


def generator_residual(
    schedule: Schedule,
    params: PhysicalParams,
    t: float,
    dt_fd: float,
    grid: Grid,
    potential: PotentialSpec | None = None,
    substitute_h1: bool = False,
    n_probe: int | None = None,
) -> float:
    """Residual of i hbar dU/dt = H2 U - U H1, dU/dt by centred difference.

    With substitute_h1 the open Hamiltonian is replaced by H1 (negative control).
    """
    potential = potential or PotentialSpec.harmonic(params)
    H1 = build_h1(grid, params, potential)
    H2 = H1 if substitute_h1 else build_h2(grid, params, potential, schedule, t)
    U = matrix_of_U(schedule, params, t, grid)
    Up = matrix_of_U(schedule, params, t + dt_fd, grid)
    Um = matrix_of_U(schedule, params, t - dt_fd, grid)
    basis = _basis(params, grid, n_probe)

    def res(v):
        dU = 1j * params.hbar * (Up.matvec(v) - Um.matvec(v)) / (2 * dt_fd)
        return dU - (H2.matvec(U.matvec(v)) - U.matvec(H1.matvec(v)))

    return compressed_max_norm(res, basis, grid)


def generator_difference_error(
    schedule: Schedule, params: PhysicalParams, t: float, dt_fd: float, dt_ref: float, grid: Grid,
    n_probe: int | None = None,
) -> float:
    """Truncation error of the centred dU/dt at step dt_fd, measured against step dt_ref.

    The spatial part of the generator residual does not depend on the time step
    and cancels here, so the result isolates the O(dt_fd^2) term.
    """
    def centred(h):
        Up = matrix_of_U(schedule, params, t + h, grid)
        Um = matrix_of_U(schedule, params, t - h, grid)
        return lambda v: (Up.matvec(v) - Um.matvec(v)) / (2 * h)

    coarse, ref = centred(dt_fd), centred(dt_ref)
    return params.hbar * compressed_max_norm(lambda v: coarse(v) - ref(v), _basis(params, grid, n_probe), grid)


def explicit_generator_residual(
    schedule, params, t, grid: Grid, potential: PotentialSpec | None = None, n_probe: int | None = None
) -> float:
    """Compare H2 U - U H1 with G U, G the explicit bracketed generator."""
    potential = potential or PotentialSpec.harmonic(params)
    H1 = build_h1(grid, params, potential)
    H2 = build_h2(grid, params, potential, schedule, t)
    G = build_generator(grid, params, schedule, t)
    U = matrix_of_U(schedule, params, t, grid)
    basis = _basis(params, grid, n_probe)

    def res(v):
        Uv = U.matvec(v)
        return H2.matvec(Uv) - U.matvec(H1.matvec(v)) - G.matvec(Uv)

    return compressed_max_norm(res, basis, grid)
