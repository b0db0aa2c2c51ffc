"""Schedules, potentials, grid operators and the Hamiltonians of the closed, open and driven systems.

All Hamiltonians here are tridiagonal on the grid: the kinetic term uses the
[1, -2, 1] stencil, the momentum the antisymmetric centred difference, and
every potential-like term is diagonal. Operators are kept in band form and
densified only on request.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import ConfigurationError, Grid, PhysicalParams

log = logging.getLogger(__name__)

SCHEDULE_FAMILIES = ("constant", "cos_ramp", "linear_ramp")
ADIABATICITY_WARN = 0.1


# -- schedules ------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """The time functions alpha(t), beta(t), R(t) with exact derivatives.

    cos_ramp:    alpha = ea (1 - cos W t), beta = eb sin W t, R = R0 + eR (1 - cos W t)
    linear_ramp: alpha = ea W t,           beta = eb W t,     R = R0 + eR W t
    constant:    alpha = beta = 0,                            R = R0
    """

    family: str = "cos_ramp"
    eps_alpha: float = 0.0
    eps_beta: float = 0.0
    eps_R: float = 0.0
    Omega: float = 0.01
    R0: float = 0.0

    def __post_init__(self):
        if self.family not in SCHEDULE_FAMILIES:
            raise ConfigurationError(
                f"unknown schedule family {self.family!r}; expected one of {SCHEDULE_FAMILIES}"
            )
        values = (self.eps_alpha, self.eps_beta, self.eps_R, self.Omega, self.R0)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError("schedule parameters must be finite")
        if self.family != "constant" and not self.Omega > 0:
            raise ConfigurationError(f"Omega must be positive, got {self.Omega}")

    @classmethod
    def constant(cls, R0: float = 0.0) -> Schedule:
        return cls("constant", R0=R0)

    @property
    def is_static(self) -> bool:
        if self.family == "constant":
            return True
        return self.eps_alpha == 0 and self.eps_beta == 0 and self.eps_R == 0

    @property
    def period(self) -> float:
        return 2 * math.pi / self.Omega

    def _shape(self, t, cos_form, lin_form):
        t = np.asarray(t, dtype=float)
        if self.family == "cos_ramp":
            return cos_form(self.Omega * t)
        if self.family == "linear_ramp":
            return lin_form(self.Omega * t)
        return np.zeros_like(t)

    def alpha(self, t):
        return self.eps_alpha * self._shape(t, lambda p: 1 - np.cos(p), lambda p: p)

    def alpha_dot(self, t):
        W = self.Omega
        return self.eps_alpha * W * self._shape(t, np.sin, np.ones_like)

    def alpha_ddot(self, t):
        W = self.Omega
        return self.eps_alpha * W**2 * self._shape(t, np.cos, np.zeros_like)

    def beta(self, t):
        return self.eps_beta * self._shape(t, np.sin, lambda p: p)

    def beta_dot(self, t):
        W = self.Omega
        return self.eps_beta * W * self._shape(t, np.cos, np.ones_like)

    def beta_ddot(self, t):
        W = self.Omega
        return -self.eps_beta * W**2 * self._shape(t, np.sin, np.zeros_like)

    def R(self, t):
        return self.R0 + self.eps_R * self._shape(t, lambda p: 1 - np.cos(p), lambda p: p)

    def R_dot(self, t):
        W = self.Omega
        return self.eps_R * W * self._shape(t, np.sin, np.ones_like)

    def max_shift(self, params: PhysicalParams, t_max: float | None = None) -> float:
        """Largest |beta| or |R|/(m w^2) reached on [0, t_max] (one period by default)."""
        if self.family == "constant":
            return abs(self.R0) / (params.m * params.omega**2)
        t_max = self.period if t_max is None else t_max
        t = np.linspace(0.0, t_max, 2001)
        beta = np.max(np.abs(self.beta(t)))
        drive = np.max(np.abs(self.R(t))) / (params.m * params.omega**2)
        return float(max(beta, drive))

    def adiabaticity(self, params: PhysicalParams, t_max: float | None = None) -> dict[str, float]:
        """max |alpha_dot| / omega and max |beta_dot| / (x0 omega) over [0, t_max]."""
        if t_max is None:
            t_max = 1.0 if self.family == "constant" else self.period
        t = np.linspace(0.0, t_max, 2001)
        ratios = {
            "alpha_rate": float(np.max(np.abs(self.alpha_dot(t)))) / params.omega,
            "beta_rate": float(np.max(np.abs(self.beta_dot(t)))) / (params.x0 * params.omega),
        }
        for name, value in ratios.items():
            if value > ADIABATICITY_WARN:
                warnings.warn(f"schedule is not adiabatic: {name} = {value:.3g}", stacklevel=2)
        return ratios


# -- potentials -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    kind: str
    m: float = 1.0
    omega: float = 1.0
    q_samples: np.ndarray | None = None
    v_samples: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "harmonic":
            return
        if self.kind != "tabulated":
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        q = np.asarray(self.q_samples, dtype=float)
        v = np.asarray(self.v_samples, dtype=float)
        if q.ndim != 1 or q.shape != v.shape or q.size < 4:
            raise ConfigurationError("tabulated potential needs matching 1-D samples (>= 4)")
        if not np.all(np.diff(q) > 0):
            raise ConfigurationError("tabulated potential samples must be strictly increasing in q")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("tabulated potential must be finite")
        object.__setattr__(self, "q_samples", q)
        object.__setattr__(self, "v_samples", v)

    @classmethod
    def harmonic(cls, params: PhysicalParams) -> PotentialSpec:
        return cls("harmonic", m=params.m, omega=params.omega)

    @classmethod
    def tabulated(cls, q, v) -> PotentialSpec:
        return cls("tabulated", q_samples=q, v_samples=v)

    @cached_property
    def _spline(self):
        return CubicSpline(self.q_samples, self.v_samples)

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "harmonic":
            return (-math.inf, math.inf)
        return (float(self.q_samples[0]), float(self.q_samples[-1]))

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.kind == "harmonic":
            return 0.5 * self.m * self.omega**2 * q**2
        lo, hi = self.domain
        tol = 1e-9 * (hi - lo)
        if q.size and (q.min() < lo - tol or q.max() > hi + tol):
            raise ConfigurationError(
                f"potential table [{lo}, {hi}] does not cover [{q.min()}, {q.max()}]"
            )
        return self._spline(np.clip(q, lo, hi))


# -- operator matrices ----------------------------------------------------------------


class OperatorMatrix:
    """A grid operator held as tridiagonal bands, a sparse matrix, or a dense array."""

    def __init__(self, grid: Grid, entries=None, *, bands=None, sparse=None):
        if sum(x is not None for x in (entries, bands, sparse)) != 1:
            raise ValueError("give exactly one of entries, bands, sparse")
        self.grid = grid
        n = grid.n_points
        if bands is not None:
            sub, diag, sup = (np.asarray(b, dtype=complex) for b in bands)
            if diag.shape != (n,) or sub.shape != (n - 1,) or sup.shape != (n - 1,):
                raise ValueError("band shapes do not match the grid")
            self._bands = (sub, diag, sup)
        else:
            self._bands = None
        self._sparse = sparse
        if entries is not None:
            entries = np.asarray(entries, dtype=complex)
            if entries.shape != (n, n):
                raise ValueError(f"expected a {n}x{n} matrix, got {entries.shape}")
            self.__dict__["entries"] = entries

    @classmethod
    def hermitian_tridiagonal(cls, grid: Grid, diag, sup) -> OperatorMatrix:
        sup = np.asarray(sup, dtype=complex)
        return cls(grid, bands=(np.conj(sup), diag, sup))

    @property
    def is_tridiagonal(self) -> bool:
        return self._bands is not None

    @property
    def bands(self):
        if self._bands is None:
            raise ValueError("operator is not stored in band form")
        return self._bands

    @cached_property
    def entries(self) -> np.ndarray:
        if self._sparse is not None:
            return np.asarray(self._sparse.toarray(), dtype=complex)
        sub, diag, sup = self._bands
        return np.diag(diag) + np.diag(sup, 1) + np.diag(sub, -1)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        if self._bands is not None:
            sub, diag, sup = self._bands
            if v.ndim == 2:
                sub, diag, sup = sub[:, None], diag[:, None], sup[:, None]
            out = diag * v
            out[:-1] += sup * v[1:]
            out[1:] += sub * v[:-1]
            return out
        if self._sparse is not None:
            return np.asarray(self._sparse @ v)
        return self.entries @ v

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.grid, self.matvec(other.entries))
        return self.matvec(other)

    def _combine(self, other: OperatorMatrix, sign: float) -> OperatorMatrix:
        if self.grid != other.grid:
            raise ValueError("operators live on different grids")
        if self._bands is not None and other._bands is not None:
            bands = tuple(a + sign * b for a, b in zip(self._bands, other._bands))
            return OperatorMatrix(self.grid, bands=bands)
        return OperatorMatrix(self.grid, self.entries + sign * other.entries)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        if self._bands is not None:
            return OperatorMatrix(self.grid, bands=tuple(scalar * b for b in self._bands))
        if self._sparse is not None:
            return OperatorMatrix(self.grid, sparse=self._sparse * scalar)
        return OperatorMatrix(self.grid, self.entries * scalar)

    __rmul__ = __mul__

    def adjoint(self) -> OperatorMatrix:
        if self._bands is not None:
            sub, diag, sup = self._bands
            return OperatorMatrix(self.grid, bands=(np.conj(sup), np.conj(diag), np.conj(sub)))
        if self._sparse is not None:
            return OperatorMatrix(self.grid, sparse=self._sparse.conj().T.tocsr())
        return OperatorMatrix(self.grid, self.entries.conj().T)

    def hermiticity_residual(self) -> float:
        if self._bands is not None:
            sub, diag, sup = self._bands
            return float(max(np.max(np.abs(diag.imag)), np.max(np.abs(sub - np.conj(sup)))))
        a = self.entries
        return float(np.max(np.abs(a - a.conj().T)))

    def max_abs(self) -> float:
        if self._bands is not None:
            return float(max(np.max(np.abs(b)) for b in self._bands))
        return float(np.max(np.abs(self.entries)))


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return OperatorMatrix(a.grid, a.matvec(b.entries) - b.matvec(a.entries))


# -- stencils -------------------------------------------------------------------------


def _kinetic_coeffs(grid: Grid, params: PhysicalParams) -> tuple[float, float]:
    c = params.hbar**2 / (2 * params.m * grid.dx**2)
    return 2 * c, -c


def _momentum_sup(grid: Grid, params: PhysicalParams) -> complex:
    # P = -i hbar (psi_{j+1} - psi_{j-1}) / (2 dx)
    return -1j * params.hbar / (2 * grid.dx)


def _dilation_sup(grid: Grid, params: PhysicalParams) -> np.ndarray:
    """Super-diagonal of XP + PX."""
    x = grid.x
    return _momentum_sup(grid, params) * (x[:-1] + x[1:])


def kinetic_matrix(grid: Grid, params: PhysicalParams) -> OperatorMatrix:
    d, o = _kinetic_coeffs(grid, params)
    n = grid.n_points
    return OperatorMatrix.hermitian_tridiagonal(grid, np.full(n, d), np.full(n - 1, o))


def momentum_matrix(grid: Grid, params: PhysicalParams) -> OperatorMatrix:
    n = grid.n_points
    return OperatorMatrix.hermitian_tridiagonal(
        grid, np.zeros(n), np.full(n - 1, _momentum_sup(grid, params))
    )


def position_matrix(grid: Grid) -> OperatorMatrix:
    n = grid.n_points
    return OperatorMatrix.hermitian_tridiagonal(grid, grid.x, np.zeros(n - 1))


def dilation_matrix(grid: Grid, params: PhysicalParams) -> OperatorMatrix:
    """XP + PX with the centred-difference P."""
    return OperatorMatrix.hermitian_tridiagonal(
        grid, np.zeros(grid.n_points), _dilation_sup(grid, params)
    )


def _check_covers(potential: PotentialSpec, q) -> None:
    lo, hi = potential.domain
    q = np.asarray(q)
    if q.min() < lo or q.max() > hi:
        raise ConfigurationError(
            f"potential table [{lo}, {hi}] does not cover [{q.min():.6g}, {q.max():.6g}]"
        )


# -- band builders, vectorized over time ----------------------------------------------
#
# Each returns (diag, sup) with shapes (..., n) and (..., n - 1) where the leading
# axes follow the shape of t. The diagonal is real, the sub-diagonal conj(sup).


def h1_bands(grid: Grid, params: PhysicalParams, potential: PotentialSpec):
    _check_covers(potential, grid.x)
    kd, ko = _kinetic_coeffs(grid, params)
    diag = kd + potential(grid.x)
    sup = np.full(grid.n_points - 1, ko, dtype=complex)
    return diag, sup


def _schedule_at(schedule: Schedule, t):
    t = np.asarray(t, dtype=float)[..., None]
    return (
        schedule.alpha(t),
        schedule.alpha_dot(t),
        schedule.alpha_ddot(t),
        schedule.beta(t),
        schedule.beta_dot(t),
    )


def h2_bands(grid, params, potential, schedule, t):
    """Bands of the open-system Hamiltonian

    e^{-2a} P^2/2m + (m/2)(a'^2 + a'') e^{2a} Q^2 + b' e^{-a} P + m a' b' e^{a} Q + V(e^{a} Q - b).
    """
    a, ad, add, b, bd = _schedule_at(schedule, t)
    x = grid.x
    kd, ko = _kinetic_coeffs(grid, params)
    q = np.exp(a) * x - b
    _check_covers(potential, q)
    m = params.m
    diag = (
        np.exp(-2 * a) * kd
        + 0.5 * m * (ad**2 + add) * np.exp(2 * a) * x**2
        + m * ad * bd * np.exp(a) * x
        + potential(q)
    )
    sup = np.exp(-2 * a) * ko + bd * np.exp(-a) * _momentum_sup(grid, params)
    return diag, np.broadcast_to(np.asarray(sup, dtype=complex), diag.shape[:-1] + (grid.n_points - 1,))


def invariant_bands(grid, params, potential, schedule, t):
    """Bands of the quadratic invariant

    e^{-2a} P^2/2m + (m/2) a'^2 e^{2a} Q^2 + (a'/2)(QP + PQ) + V(e^{a} Q - b).
    """
    a, ad, _, b, _ = _schedule_at(schedule, t)
    x = grid.x
    kd, ko = _kinetic_coeffs(grid, params)
    q = np.exp(a) * x - b
    _check_covers(potential, q)
    diag = np.exp(-2 * a) * kd + 0.5 * params.m * ad**2 * np.exp(2 * a) * x**2 + potential(q)
    sup = np.exp(-2 * a) * ko + 0.5 * ad * _dilation_sup(grid, params)
    return diag, np.asarray(sup, dtype=complex)


def generator_bands(grid, params, schedule, t):
    """Bands of -(a'/2)(QP + PQ) + b' e^{-a} P + m a' b' e^{a} Q + (m/2) a'' e^{2a} Q^2."""
    a, ad, add, _, bd = _schedule_at(schedule, t)
    x = grid.x
    m = params.m
    diag = 0.5 * m * add * np.exp(2 * a) * x**2 + m * ad * bd * np.exp(a) * x
    sup = -0.5 * ad * _dilation_sup(grid, params) + bd * np.exp(-a) * _momentum_sup(grid, params)
    return diag, np.asarray(sup, dtype=complex)


def driven_bands(grid, params, R):
    """Bands of P^2/2m + (m/2) w^2 x^2 - x R for drive value(s) R."""
    R = np.asarray(R, dtype=float)[..., None]
    x = grid.x
    kd, ko = _kinetic_coeffs(grid, params)
    diag = kd + 0.5 * params.m * params.omega**2 * x**2 - x * R
    sup = np.full(diag.shape[:-1] + (grid.n_points - 1,), ko, dtype=complex)
    return diag, sup


def _hermitian(grid, bands) -> OperatorMatrix:
    diag, sup = bands
    return OperatorMatrix.hermitian_tridiagonal(grid, diag, sup)


def build_h1(grid: Grid, params: PhysicalParams, potential: PotentialSpec) -> OperatorMatrix:
    return _hermitian(grid, h1_bands(grid, params, potential))


def build_h2(grid, params, potential, schedule, t: float) -> OperatorMatrix:
    return _hermitian(grid, h2_bands(grid, params, potential, schedule, float(t)))


def build_generator(grid, params, schedule, t: float) -> OperatorMatrix:
    return _hermitian(grid, generator_bands(grid, params, schedule, float(t)))


def build_driven_ho(grid: Grid, params: PhysicalParams, R_value: float) -> OperatorMatrix:
    return _hermitian(grid, driven_bands(grid, params, float(R_value)))


# -- Hamiltonian families for time stepping -------------------------------------------


class HamiltonianFamily:
    """H(t) on a fixed grid, evaluable in band form for many times at once."""

    descriptor = "abstract"

    def __init__(self, grid: Grid, params: PhysicalParams):
        self.grid = grid
        self.params = params

    def bands(self, t):
        raise NotImplementedError

    def matrix(self, t: float) -> OperatorMatrix:
        return _hermitian(self.grid, self.bands(float(t)))

    @property
    def is_static(self) -> bool:
        return False


class ClosedFamily(HamiltonianFamily):
    descriptor = "H1"

    def __init__(self, grid, params, potential):
        super().__init__(grid, params)
        self.potential = potential
        self._bands = h1_bands(grid, params, potential)

    def bands(self, t):
        shape = np.shape(t)
        diag, sup = self._bands
        return np.broadcast_to(diag, shape + diag.shape), np.broadcast_to(sup, shape + sup.shape)

    @property
    def is_static(self) -> bool:
        return True


class OpenFamily(HamiltonianFamily):
    descriptor = "H2(schedule)"

    def __init__(self, grid, params, potential, schedule):
        super().__init__(grid, params)
        self.potential = potential
        self.schedule = schedule

    def bands(self, t):
        return h2_bands(self.grid, self.params, self.potential, self.schedule, t)

    @property
    def is_static(self) -> bool:
        return self.schedule.is_static


class DrivenFamily(HamiltonianFamily):
    descriptor = "driven-HO(R(t))"

    def __init__(self, grid, params, schedule):
        super().__init__(grid, params)
        self.schedule = schedule

    def bands(self, t):
        return driven_bands(self.grid, self.params, self.schedule.R(t))

    @property
    def is_static(self) -> bool:
        return self.schedule.family == "constant" or self.schedule.eps_R == 0
