"""The quadratic invariant of the open system, its identities and its eigenproblem."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eig_banded

from .grid import Grid, PhysicalParams, Wavefunction, compressed_max_norm, hermite_basis, probe_basis
from .model import (
    OperatorMatrix,
    PotentialSpec,
    Schedule,
    build_h1,
    build_h2,
    invariant_bands,
)
from .transform import matrix_of_U, matrix_of_U_dagger

DEGENERACY_GAP = 1e-8
MAX_LEVEL = 20


class EigensolveError(RuntimeError):
    pass


class DegeneracyError(EigensolveError):
    pass


def build_invariant(grid, params, potential, schedule, t: float) -> OperatorMatrix:
    diag, sup = invariant_bands(grid, params, potential, schedule, float(t))
    return OperatorMatrix.hermitian_tridiagonal(grid, diag, sup)


# -- eigensolve -------------------------------------------------------------------------


def tridiagonal_eigh(op: OperatorMatrix, n_max: int):
    """Lowest n_max + 1 eigenpairs of a Hermitian tridiagonal operator, ascending."""
    sub, diag, sup = op.bands
    n = op.grid.n_points
    band = np.zeros((2, n), dtype=complex)
    band[0, 1:] = sup
    band[1] = diag
    try:
        w, v = eig_banded(band, lower=False, select="i", select_range=(0, n_max))
    except LinAlgError as exc:
        raise EigensolveError(f"eigensolve did not converge: {exc}") from exc
    if w.size != n_max + 1:
        raise EigensolveError(f"eigensolve returned {w.size} of {n_max + 1} requested pairs")
    gaps = np.diff(w)
    if gaps.size and gaps.min() < DEGENERACY_GAP:
        k = int(np.argmin(gaps))
        raise DegeneracyError(f"eigenvalues {k} and {k + 1} differ by {gaps[k]:.3g}")
    # grid vectors -> unit L2 norm on the grid
    v = v / np.sqrt(op.grid.dx)
    return w, v


def fix_phases(vectors: np.ndarray, reference: np.ndarray, grid: Grid) -> np.ndarray:
    """Rotate each column so its overlap with the matching reference column is real positive."""
    overlaps = np.sum(grid.weights[:, None] * np.conj(reference) * vectors, axis=0)
    phases = np.where(np.abs(overlaps) > 0, np.conj(overlaps) / np.abs(overlaps), 1.0)
    return vectors * phases[None, :]


@dataclass(frozen=True, eq=False)
class InvariantEigenSystem:
    t: float
    lambdas: np.ndarray
    states: list[Wavefunction] = field(repr=False)
    phase_convention: str = "<h_n|phi_n> real positive"
    imag_residue: float = 0.0

    def overlap_matrix(self) -> np.ndarray:
        vecs = np.stack([s.amplitudes for s in self.states], axis=1)
        w = self.states[0].grid.weights[:, None]
        return (np.conj(vecs) * w).T @ vecs


def eigen_system(op: OperatorMatrix, n_max: int, reference: np.ndarray, t: float, convention: str):
    if not 0 <= n_max <= MAX_LEVEL:
        raise ValueError(f"n_max must lie in [0, {MAX_LEVEL}], got {n_max}")
    w, v = tridiagonal_eigh(op, n_max)
    v = fix_phases(v, reference, op.grid)
    # Rayleigh quotients carry the (vanishing) imaginary residue of the Hermitian solve
    rq = np.sum(np.conj(v) * op.matvec(v), axis=0) * op.grid.dx
    states = [Wavefunction(op.grid, v[:, k]) for k in range(v.shape[1])]
    return InvariantEigenSystem(
        t=float(t),
        lambdas=np.asarray(w, dtype=float),
        states=states,
        phase_convention=convention,
        imag_residue=float(np.max(np.abs(rq.imag))),
    )


def eigen_invariant(schedule, params, potential, t: float, n_max: int, grid: Grid) -> InvariantEigenSystem:
    op = build_invariant(grid, params, potential, schedule, t)
    reference = hermite_basis(n_max, params.x0, 0.0, grid)
    return eigen_system(op, n_max, reference, t, "<h_n|phi_n> real positive")


# -- identities -------------------------------------------------------------------------


def _basis(params, grid, n_probe):
    return probe_basis(params, grid) if n_probe is None else probe_basis(params, grid, n_probe)


def check_conjugation_identity(schedule, params, potential, t, grid: Grid, n_probe: int | None = None) -> float:
    """Resolved-subspace max norm of I - U H1 U^dag."""
    I = build_invariant(grid, params, potential, schedule, t)
    H1 = build_h1(grid, params, potential)
    U = matrix_of_U(schedule, params, t, grid)
    Ud = matrix_of_U_dagger(schedule, params, t, grid)
    return compressed_max_norm(
        lambda v: I.matvec(v) - U.matvec(H1.matvec(Ud.matvec(v))), _basis(params, grid, n_probe), grid
    )


def lvn_residual(
    schedule,
    params,
    potential,
    t: float,
    dt_fd: float,
    grid: Grid,
    hamiltonian: str = "H2",
    n_probe: int | None = None,
) -> float:
    """Residual of dI/dt + [I, H] / (i hbar), dI/dt by centred difference.

    `hamiltonian="H1"` swaps in the closed-system Hamiltonian (negative control).
    """
    I = build_invariant(grid, params, potential, schedule, t)
    Ip = build_invariant(grid, params, potential, schedule, t + dt_fd)
    Im = build_invariant(grid, params, potential, schedule, t - dt_fd)
    if hamiltonian == "H2":
        H = build_h2(grid, params, potential, schedule, t)
    elif hamiltonian == "H1":
        H = build_h1(grid, params, potential)
    else:
        raise ValueError(f"hamiltonian must be 'H2' or 'H1', got {hamiltonian!r}")

    def res(v):
        dI = (Ip.matvec(v) - Im.matvec(v)) / (2 * dt_fd)
        comm = I.matvec(H.matvec(v)) - H.matvec(I.matvec(v))
        return dI + comm / (1j * params.hbar)

    return compressed_max_norm(res, _basis(params, grid, n_probe), grid)


def lvn_difference_error(
    schedule, params, potential, t: float, dt_fd: float, dt_ref: float, grid: Grid, n_probe: int | None = None
) -> float:
    """Truncation error of the centred dI/dt at step dt_fd against step dt_ref."""
    def centred(h):
        Ip = build_invariant(grid, params, potential, schedule, t + h)
        Im = build_invariant(grid, params, potential, schedule, t - h)
        return lambda v: (Ip.matvec(v) - Im.matvec(v)) / (2 * h)

    coarse, ref = centred(dt_fd), centred(dt_ref)
    return compressed_max_norm(lambda v: coarse(v) - ref(v), _basis(params, grid, n_probe), grid)


def commutator_norm_with_h2(schedule, params, potential, t, grid: Grid) -> float:
    """Max-element norm of the full grid matrix [I, H2].

    Both factors are tridiagonal, so the commutator is pentadiagonal and is
    evaluated band by band.
    """
    I = build_invariant(grid, params, potential, schedule, t)
    H = build_h2(grid, params, potential, schedule, t)
    n = grid.n_points
    best = 0.0
    # columns j, j+5, ... never interact within a pentadiagonal product
    for start in range(5):
        probe = np.zeros((n, 1), dtype=complex)
        probe[start::5, 0] = 1.0
        hi = H.matvec(I.matvec(probe))
        ih = I.matvec(H.matvec(probe))
        best = max(best, float(np.max(np.abs(ih - hi))))
    return best


def spectral_sweep(schedule, params, potential, times, n_max: int, grid: Grid) -> np.ndarray:
    """lambda_n(t) for each sampled t, shape (len(times), n_max + 1)."""
    return np.array([eigen_invariant(schedule, params, potential, t, n_max, grid).lambdas for t in times])
