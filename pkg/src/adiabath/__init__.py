"""Numerical checks of the quadratic invariant of a time-dependent open oscillator
and of the adiabatic behaviour it implies."""

from .grid import ConfigurationError, Grid, PhysicalParams, Wavefunction, default_grid, inner_product
from .model import ClosedFamily, DrivenFamily, OpenFamily, PotentialSpec, Schedule
from .propagator import overlap_track, phase_track, propagate, propagate_batch

__version__ = "0.1.0"

__all__ = [
    "ClosedFamily",
    "ConfigurationError",
    "DrivenFamily",
    "Grid",
    "OpenFamily",
    "PhysicalParams",
    "PotentialSpec",
    "Schedule",
    "Wavefunction",
    "default_grid",
    "inner_product",
    "overlap_track",
    "phase_track",
    "propagate",
    "propagate_batch",
]
