"""Uniform 1-D grids, wavefunctions on them, and Hermite-Gaussian basis functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_POINTS = 8
DEFAULT_POINTS = 2048
DEFAULT_HALF_WIDTH = 12.0  # in units of x0


class ConfigurationError(ValueError):
    """Raised for invalid grids, parameters, schedules or config files."""


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0
    R0: float = 0.0

    def __post_init__(self):
        for name in ("m", "omega", "hbar"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
        if not math.isfinite(self.R0):
            raise ConfigurationError(f"R0 must be finite, got {self.R0!r}")

    @property
    def x0(self) -> float:
        """Oscillator length sqrt(hbar / (m omega))."""
        return math.sqrt(self.hbar / (self.m * self.omega))


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise ConfigurationError(
                f"grid needs at least {MIN_POINTS} points, got {self.n_points!r}"
            )
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)) or not self.x_min < self.x_max:
            raise ConfigurationError(f"degenerate interval [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_points)
        x[-1] = self.x_max
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n_points, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.setflags(write=False)
        return w

    def refined(self) -> Grid:
        """Same interval with dx halved."""
        return Grid(self.x_min, self.x_max, 2 * self.n_points - 1)


def make_grid(x_min: float, x_max: float, n_points: int) -> Grid:
    return Grid(float(x_min), float(x_max), n_points)


def default_grid(params: PhysicalParams, shift: float = 0.0, n_points: int = DEFAULT_POINTS) -> Grid:
    """Symmetric grid covering +-12 x0 beyond the largest displacement `shift`."""
    half = DEFAULT_HALF_WIDTH * params.x0 + abs(shift)
    return Grid(-half, half, n_points)


@dataclass(frozen=True, eq=False)
class Wavefunction:
    grid: Grid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} amplitudes, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self).real)

    def __mul__(self, scalar: complex) -> Wavefunction:
        return Wavefunction(self.grid, self.amplitudes * scalar)

    __rmul__ = __mul__

    def __add__(self, other: Wavefunction) -> Wavefunction:
        _check_same_grid(self, other)
        return Wavefunction(self.grid, self.amplitudes + other.amplitudes)

    def __sub__(self, other: Wavefunction) -> Wavefunction:
        _check_same_grid(self, other)
        return Wavefunction(self.grid, self.amplitudes - other.amplitudes)

    def expectation_x(self) -> float:
        """<x> / <psi|psi>."""
        w = self.grid.weights * np.abs(self.amplitudes) ** 2
        return float(np.sum(w * self.grid.x) / np.sum(w))

    def edge_amplitude(self) -> float:
        return float(max(abs(self.amplitudes[0]), abs(self.amplitudes[-1])))


def _check_same_grid(f: Wavefunction, g: Wavefunction) -> None:
    if f.grid != g.grid:
        raise ValueError("wavefunctions live on different grids")


def inner_product(f: Wavefunction, g: Wavefunction) -> complex:
    """Trapezoid approximation of the integral of conj(f) g."""
    _check_same_grid(f, g)
    return complex(np.sum(f.grid.weights * np.conj(f.amplitudes) * g.amplitudes))


def l2_distance(f: Wavefunction, g: Wavefunction) -> float:
    return (f - g).norm()


def normalize(f: Wavefunction) -> Wavefunction:
    nrm = f.norm()
    if not nrm > 0:
        raise ValueError("cannot normalize a zero-norm wavefunction")
    return Wavefunction(f.grid, f.amplitudes / nrm)


def hermite_values(n: int, xi: np.ndarray) -> np.ndarray:
    """Orthonormal Hermite functions h_0..h_n of the dimensionless coordinate xi.

    Returns an array of shape (n + 1, len(xi)). The normalized three-term
    recurrence keeps every intermediate value O(1), so large n does not overflow.
    """
    if n < 0:
        raise ValueError(f"Hermite index must be non-negative, got {n}")
    xi = np.asarray(xi, dtype=float)
    out = np.empty((n + 1,) + xi.shape)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * xi**2)
    if n >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for k in range(1, n):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * xi * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hermite_function(n: int, x0: float, center: float, grid: Grid) -> Wavefunction:
    """Normalized Hermite-Gaussian of order n, width x0, centred at `center`."""
    if n < 0:
        raise ValueError(f"Hermite index must be non-negative, got {n}")
    if not x0 > 0:
        raise ValueError(f"x0 must be positive, got {x0}")
    xi = (grid.x - center) / x0
    return Wavefunction(grid, hermite_values(n, xi)[n] / math.sqrt(x0))


def hermite_basis(n_max: int, x0: float, center: float, grid: Grid) -> np.ndarray:
    """Columns h_0..h_{n_max} sampled on the grid, shape (n_points, n_max + 1)."""
    xi = (grid.x - center) / x0
    return (hermite_values(n_max, xi) / math.sqrt(x0)).T.astype(complex)


# -- resolved-subspace operator norms -------------------------------------------------
#
# Identities between grid operators hold only on functions the grid resolves;
# grid-scale modes (Nyquist, interpolation nulls) break them at O(1). Residual
# operators are therefore measured through their matrix elements between the
# low Hermite functions, which is the max-element norm on the resolved subspace.

PROBE_STATES = 4


def probe_basis(params: PhysicalParams, grid: Grid, n_states: int = PROBE_STATES) -> np.ndarray:
    return hermite_basis(n_states - 1, params.x0, 0.0, grid)


def compressed(action, basis: np.ndarray, grid: Grid) -> np.ndarray:
    """Matrix <b_m| A |b_n> for an operator given by its action on column blocks."""
    image = action(basis)
    return (np.conj(basis) * grid.weights[:, None]).T @ image


def compressed_max_norm(action, basis: np.ndarray, grid: Grid) -> float:
    return float(np.max(np.abs(compressed(action, basis, grid))))
