"""Crank-Nicolson time stepping, TDSE residuals of candidate solutions, and overlap tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from scipy.linalg import eig_banded, eigh_tridiagonal

from .grid import Grid, Wavefunction, inner_product
from .model import HamiltonianFamily

NORM_TOLERANCE = 1e-8
MIN_OVERLAP_FOR_PHASE = 0.9
_CHUNK = 256
DEFAULT_SNAPSHOTS = 200


class PropagationError(RuntimeError):
    pass


@njit(cache=True, nogil=True)
def _cn_steps(psi, diag, sup, h):  # pragma: no cover - compiled
    """Advance the column block psi through len(diag) Crank-Nicolson steps in place.

    Step s solves (1 + i h H_s) psi' = (1 - i h H_s) psi with H_s the Hermitian
    tridiagonal (diag[s], sup[s], conj(sup[s])) and h = dt / (2 hbar).
    Returns the first step with a singular pivot, or -1.
    """
    n, m = psi.shape
    rhs = np.empty((n, m), np.complex128)
    cp = np.empty(n, np.complex128)
    inv = np.empty(n, np.complex128)
    for s in range(diag.shape[0]):
        d = diag[s]
        o = sup[s]
        for i in range(n):
            c = complex(1.0, -h * d[i])
            for j in range(m):
                rhs[i, j] = c * psi[i, j]
        for i in range(n - 1):
            up = complex(h * o[i].imag, -h * o[i].real)
            lo = complex(-h * o[i].imag, -h * o[i].real)
            for j in range(m):
                rhs[i, j] += up * psi[i + 1, j]
                rhs[i + 1, j] += lo * psi[i, j]
        # Thomas elimination in real arithmetic; the pivot chain is latency bound
        cpr = 0.0
        cpi = 0.0
        for i in range(n):
            zr = 1.0
            zi = h * d[i]
            if i > 0:
                sr = h * o[i - 1].imag
                si = h * o[i - 1].real
                zr -= sr * cpr - si * cpi
                zi -= sr * cpi + si * cpr
            den = zr * zr + zi * zi
            if not den > 0.0 or not math.isfinite(den):
                return s
            q = 1.0 / den
            ir = zr * q
            ii = -zi * q
            inv[i] = complex(ir, ii)
            if i < n - 1:
                ur = -h * o[i].imag
                ui = h * o[i].real
                cpr = ur * ir - ui * ii
                cpi = ur * ii + ui * ir
                cp[i] = complex(cpr, cpi)
        for j in range(m):
            rhs[0, j] *= inv[0]
        for i in range(1, n):
            sub = complex(h * o[i - 1].imag, h * o[i - 1].real)
            for j in range(m):
                rhs[i, j] = (rhs[i, j] - sub * rhs[i - 1, j]) * inv[i]
        for i in range(n - 2, -1, -1):
            for j in range(m):
                rhs[i, j] -= cp[i] * rhs[i + 1, j]
        for i in range(n):
            for j in range(m):
                psi[i, j] = rhs[i, j]
    return -1


@dataclass(frozen=True, eq=False)
class PropagationRun:
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # (len(times), n_points)
    grid: Grid = field(repr=False)
    h_builder: str
    dt: float
    norms: np.ndarray = field(repr=False)
    hbar: float = 1.0

    def state(self, k: int) -> Wavefunction:
        return Wavefunction(self.grid, self.states[k])

    @property
    def wavefunctions(self) -> list[Wavefunction]:
        return [self.state(k) for k in range(len(self.times))]

    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))


def _step_count(t0: float, t1: float, dt: float) -> int:
    if not dt > 0 or not t1 > t0:
        raise ValueError(f"need dt > 0 and t1 > t0, got dt={dt}, [{t0}, {t1}]")
    steps = (t1 - t0) / dt
    n = int(round(steps))
    if n < 1 or abs(steps - n) > 1e-9 * max(1.0, steps):
        raise ValueError(f"(t1 - t0) / dt = {steps} is not an integer step count")
    return n


def _static_cn(psi, h_builder, h, store_steps):
    """Crank-Nicolson powers for a time-independent H through its spectral form.

    With H = V diag(E) V^H the step map is V diag((1 - i h E) / (1 + i h E)) V^H,
    so any power is applied exactly without stepping. Modes carrying no weight
    (below 1e-15 of the largest) are dropped.
    """
    diag, sup = h_builder.bands(0.0)
    if np.all(sup.imag == 0):
        E, V = eigh_tridiagonal(diag, sup.real)
    else:
        band = np.zeros((2, diag.shape[-1]), dtype=complex)
        band[0, 1:] = sup
        band[1] = diag
        E, V = eig_banded(band, lower=False)
    coeffs = V.conj().T @ psi
    weight = np.max(np.abs(coeffs), axis=1)
    keep = weight > 1e-15 * weight.max()
    E, V, coeffs = E[keep], V[:, keep], coeffs[keep]
    phases = np.exp(-2j * np.outer(store_steps, np.arctan(h * E)))  # (n_store, modes)
    return np.einsum("im,km,mj->kij", V, phases, coeffs, optimize=True)


def _stepped(psi, h_builder, t0, dt, h, store_steps):
    stored = np.empty((len(store_steps),) + psi.shape, dtype=complex)
    stored[0] = psi
    step = 0
    for k, end in enumerate(store_steps[1:], start=1):
        while step < end:
            chunk = min(_CHUNK, end - step)
            t_mid = t0 + (step + 0.5 + np.arange(chunk)) * dt
            diag, sup = h_builder.bands(t_mid)
            diag = np.ascontiguousarray(diag, dtype=float)
            sup = np.ascontiguousarray(sup, dtype=complex)
            failed = _cn_steps(psi, diag, sup, h)
            if failed >= 0:
                raise PropagationError(f"singular Crank-Nicolson pivot at step {step + failed}")
            step += chunk
        if not np.all(np.isfinite(psi)):
            raise PropagationError(f"non-finite state after step {step}")
        stored[k] = psi
    return stored


def propagate_batch(
    psi0s: list[Wavefunction],
    h_builder: HamiltonianFamily,
    t0: float,
    t1: float,
    dt: float,
    store_every: int | None = None,
    method: str = "auto",
) -> list[PropagationRun]:
    """Propagate several initial states under the same H(t), sharing each factorization.

    States are stored every `store_every` steps (about 200 snapshots by default)
    and at t1. method="step" always time-steps; "auto" applies the exact spectral
    form of the step map when the Hamiltonian is static.
    """
    if method not in ("auto", "step"):
        raise ValueError(f"method must be 'auto' or 'step', got {method!r}")
    grid = h_builder.grid
    hbar = h_builder.params.hbar
    for psi in psi0s:
        if psi.grid != grid:
            raise ValueError("initial state and Hamiltonian live on different grids")
    n_steps = _step_count(t0, t1, dt)
    if store_every is None:
        store_every = max(1, -(-n_steps // DEFAULT_SNAPSHOTS))
    if store_every < 1:
        raise ValueError(f"store_every must be positive, got {store_every}")
    store_steps = np.arange(0, n_steps + 1, store_every)
    if store_steps[-1] != n_steps:
        store_steps = np.append(store_steps, n_steps)

    psi = np.ascontiguousarray(np.stack([p.amplitudes for p in psi0s], axis=1))
    h = dt / (2 * hbar)
    if method == "auto" and h_builder.is_static:
        stored = _static_cn(psi, h_builder, h, store_steps)
    else:
        stored = _stepped(psi, h_builder, t0, dt, h, store_steps)

    times = t0 + dt * store_steps
    runs = []
    for j in range(len(psi0s)):
        states = np.ascontiguousarray(stored[:, :, j])
        norms = np.sqrt(np.sum(grid.weights * np.abs(states) ** 2, axis=1))
        run = PropagationRun(times, states, grid, h_builder.descriptor, dt, norms, hbar)
        if run.max_norm_drift() > NORM_TOLERANCE * max(norms[0], 1.0):
            raise PropagationError(f"norm drifted by {run.max_norm_drift():.3g}")
        runs.append(run)
    return runs


def propagate(psi0: Wavefunction, h_builder: HamiltonianFamily, t0: float, t1: float, dt: float,
              store_every: int | None = None, method: str = "auto") -> PropagationRun:
    return propagate_batch([psi0], h_builder, t0, t1, dt, store_every, method)[0]


# -- TDSE residual ----------------------------------------------------------------------


@dataclass(frozen=True)
class TDSEResidual:
    total: float
    parallel: float
    orthogonal: float
    energy_offset: complex  # <Psi|r>/<Psi|Psi>: real part is a phase-rate error


def tdse_residual_parts(candidate: Callable[[float], Wavefunction], h_builder: HamiltonianFamily,
                        t: float, dt_fd: float) -> TDSEResidual:
    """Split the TDSE residual of a candidate into its component along Psi and the rest.

    A candidate that is a true solution up to a time-dependent complex factor
    leaves only a parallel residual.
    """
    hbar = h_builder.params.hbar
    psi = candidate(t)
    dpsi = (candidate(t + dt_fd).amplitudes - candidate(t - dt_fd).amplitudes) / (2 * dt_fd)
    H_psi = h_builder.matrix(t).matvec(psi.amplitudes)
    r = Wavefunction(psi.grid, 1j * hbar * dpsi - H_psi)
    scale = Wavefunction(psi.grid, H_psi).norm()
    coef = inner_product(psi, r) / inner_product(psi, psi)
    parallel = psi * coef
    orth = r - parallel
    return TDSEResidual(
        total=r.norm() / scale,
        parallel=parallel.norm() / scale,
        orthogonal=orth.norm() / scale,
        energy_offset=coef,
    )


def tdse_residual(candidate, h_builder, t: float, dt_fd: float) -> float:
    """||i hbar dPsi/dt - H Psi|| / ||H Psi|| with a centred time difference."""
    return tdse_residual_parts(candidate, h_builder, t, dt_fd).total


# -- overlap tracking -------------------------------------------------------------------


class ReferenceFamily:
    """A time-indexed reference state with its (possibly time-dependent) eigenvalue."""

    def __init__(self, name: str, state_fn, eigenvalue_fn):
        self.name = name
        self._state = state_fn
        self._eigenvalue = eigenvalue_fn

    def state(self, t: float) -> Wavefunction:
        return self._state(t)

    def eigenvalue(self, t: float) -> float:
        return self._eigenvalue(t)

    def pairs(self, times) -> tuple[list[Wavefunction], np.ndarray]:
        states, values = [], []
        for t in times:
            s, v = self._pair(t)
            states.append(s)
            values.append(v)
        return states, np.array(values)

    def _pair(self, t):
        return self.state(t), self.eigenvalue(t)


class EigenReference(ReferenceFamily):
    """Reference built from a solver returning (eigenvalue, state) together."""

    def __init__(self, name: str, solver):
        self.name = name
        self._solver = solver
        self._cache: dict[float, tuple[float, Wavefunction]] = {}

    def _solve(self, t):
        t = float(t)
        if t not in self._cache:
            self._cache[t] = self._solver(t)
        return self._cache[t]

    def state(self, t):
        return self._solve(t)[1]

    def eigenvalue(self, t):
        return self._solve(t)[0]

    def _pair(self, t):
        value, state = self._solve(t)
        return state, value


@dataclass(frozen=True)
class OverlapTrack:
    times: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray  # unwrapped by continuity in t
    reference: str

    @property
    def min_overlap(self) -> float:
        return float(np.min(self.magnitude))

    @property
    def max_deficit(self) -> float:
        return float(np.max(1.0 - self.magnitude))


def overlap_track(run: PropagationRun, reference: ReferenceFamily) -> OverlapTrack:
    """|<ref(t)|Psi(t)>| and its unwrapped phase at every stored time."""
    states, _ = reference.pairs(run.times)
    ov = np.array([inner_product(s, run.state(k)) for k, s in enumerate(states)])
    return OverlapTrack(run.times.copy(), np.abs(ov), np.unwrap(np.angle(ov)), reference.name)


@dataclass(frozen=True)
class PhaseTrack:
    times: np.ndarray
    dynamical_phase: np.ndarray
    extracted_phase: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.extracted_phase - self.dynamical_phase

    @property
    def max_abs_difference(self) -> float:
        return float(np.max(np.abs(self.difference)))


def cn_quasi_energy(value, dt: float, hbar: float = 1.0):
    """Energy whose exact phase rate equals the Crank-Nicolson step phase of `value`."""
    return 2 * hbar / dt * np.arctan(np.asarray(value) * dt / (2 * hbar))


def phase_track(run: PropagationRun, reference: ReferenceFamily, step_corrected: bool = False) -> PhaseTrack:
    """Compare arg<ref_n(t)|Psi(t)> with the dynamical phase -(1/hbar) int lambda_n dt'.

    Both phases are taken relative to the first stored time. With step_corrected
    each lambda is replaced by its Crank-Nicolson quasi-energy, which removes the
    O(lambda^3 dt^2) phase error of the integrator from the comparison.
    """
    states, values = reference.pairs(run.times)
    if step_corrected:
        values = cn_quasi_energy(values, run.dt, run.hbar)
    ov = np.array([inner_product(s, run.state(k)) for k, s in enumerate(states)])
    if np.min(np.abs(ov)) < MIN_OVERLAP_FOR_PHASE:
        raise ValueError(
            f"overlap fell to {np.min(np.abs(ov)):.3g}; phase is ill-defined below {MIN_OVERLAP_FOR_PHASE}"
        )
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(run.times))])
    dynamical = -integral / run.hbar
    # unwrap the slowly varying residual; the raw phase may turn by > pi between snapshots
    residual = np.unwrap(np.angle(ov * np.exp(-1j * dynamical)))
    return PhaseTrack(run.times.copy(), dynamical, dynamical + residual - residual[0])
