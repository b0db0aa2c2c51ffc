"""Experiment configuration: a strict line-based `key = value` format.

    # comment
    experiment = invariant_spectrum        # or a comma-separated list
    schedule.family = cos_ramp
    schedule.Omega = 0.01
    grid.n_points = 2048
    tolerance.r_p = 1e-5
    output_dir = out

Every key is optional except `experiment`. Unknown keys, repeated keys and
malformed values are rejected with the offending line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .grid import ConfigurationError, Grid, PhysicalParams, default_grid
from .model import SCHEDULE_FAMILIES, Schedule

DEFAULT_DT = 1e-3
STATIC_T1 = 10.0


@dataclass(frozen=True)
class TimeSpec:
    t0: float = 0.0
    t1: float | None = None
    dt: float = DEFAULT_DT
    t_check: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiments: tuple[str, ...]
    params: PhysicalParams = field(default_factory=PhysicalParams)
    schedule: Schedule = field(default_factory=lambda: Schedule("cos_ramp", 0.01, 0.05, 0.05, 0.01))
    grid_spec: tuple[float, float, int] | None = None
    time: TimeSpec = field(default_factory=TimeSpec)
    tolerances: dict[str, float] = field(default_factory=dict)
    output_dir: Path = Path("adiabath-out")
    n_max: int | None = None

    @property
    def experiment(self) -> str:
        return ",".join(self.experiments)

    @property
    def grid(self) -> Grid:
        if self.grid_spec is not None:
            return Grid(*self.grid_spec)
        return default_grid(self.params, shift=self.schedule.max_shift(self.params, self.t1 - self.t0))

    @property
    def t0(self) -> float:
        return self.time.t0

    @property
    def dt(self) -> float:
        return self.time.dt

    @property
    def t1(self) -> float:
        """End time; one schedule period (rounded to whole steps) unless given."""
        if self.time.t1 is not None:
            return self.time.t1
        span = STATIC_T1 if self.schedule.is_static else self.schedule.period
        return self.t0 + round(span / self.dt) * self.dt

    @property
    def t_check(self) -> float:
        """Time at which instantaneous identities are checked (Omega t = 2 by default)."""
        if self.time.t_check is not None:
            return self.time.t_check
        return 1.0 if self.schedule.is_static else 2.0 / self.schedule.Omega

    def tolerance(self, check_id: str, default: float) -> float:
        return self.tolerances.get(check_id, default)


# key -> (section, field, converter)
def _float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"malformed number {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {text!r}")
    return value


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"malformed integer {text!r}") from None


def _family(text: str) -> str:
    if text not in SCHEDULE_FAMILIES:
        raise ValueError(f"unknown schedule family {text!r}; expected one of {SCHEDULE_FAMILIES}")
    return text


_KEYS = {
    "experiment": str,
    "output_dir": str,
    "params.m": _float,
    "params.omega": _float,
    "params.hbar": _float,
    "params.R0": _float,
    "schedule.family": _family,
    "schedule.eps_alpha": _float,
    "schedule.eps_beta": _float,
    "schedule.eps_R": _float,
    "schedule.Omega": _float,
    "grid.x_min": _float,
    "grid.x_max": _float,
    "grid.n_points": _int,
    "time.t0": _float,
    "time.t1": _float,
    "time.dt": _float,
    "time.t_check": _float,
    "levels.n_max": _int,
}


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_config(text: str, known_experiments=None, known_checks=None) -> ExperimentConfig:
    """Parse and validate a config document.

    `known_experiments` and `known_checks` restrict experiment names and
    `tolerance.<check_id>` keys; the runner passes its registries.
    """
    values: dict[str, tuple[object, int]] = {}
    tolerances: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if not value:
            raise ConfigurationError(f"line {lineno}: empty value for {key!r}")
        if key in values or key.removeprefix("tolerance.") in tolerances:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key.startswith("tolerance."):
                check_id = key.removeprefix("tolerance.")
                if known_checks is not None and check_id not in known_checks:
                    raise ValueError(f"unknown check id {check_id!r}")
                tol = _float(value)
                if not tol > 0:
                    raise ValueError(f"tolerance must be positive, got {tol}")
                tolerances[check_id] = tol
                continue
            if key not in _KEYS:
                raise ValueError(f"unknown key {key!r}")
            values[key] = (_KEYS[key](value), lineno)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from None

    if "experiment" not in values:
        raise ConfigurationError("missing required key 'experiment'")

    def get(key, default=None):
        return values[key][0] if key in values else default

    def checked(key, build):
        try:
            return build()
        except (ConfigurationError, ValueError) as exc:
            where = f"line {values[key][1]}: " if key in values else ""
            raise ConfigurationError(f"{where}{exc}") from None

    names = tuple(name.strip() for name in str(get("experiment")).split(","))
    for name in names:
        if not name or (known_experiments is not None and name not in known_experiments):
            raise ConfigurationError(f"line {values['experiment'][1]}: unknown experiment {name!r}")

    def first_present(prefix):
        lines = [values[k][1] for k in values if k.startswith(prefix)]
        return f"line {min(lines)}: " if lines else ""

    try:
        params = PhysicalParams(
            m=get("params.m", 1.0), omega=get("params.omega", 1.0), hbar=get("params.hbar", 1.0), R0=get("params.R0", 0.0)
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"{first_present('params.')}{exc}") from None

    family = get("schedule.family", "cos_ramp")
    try:
        schedule = Schedule(
            family,
            eps_alpha=get("schedule.eps_alpha", 0.01 if family != "constant" else 0.0),
            eps_beta=get("schedule.eps_beta", 0.05 if family != "constant" else 0.0),
            eps_R=get("schedule.eps_R", 0.05 if family != "constant" else 0.0),
            Omega=get("schedule.Omega", 0.01),
            R0=params.R0,
        )
        if family == "constant" and any(get(k, 0.0) != 0.0 for k in ("schedule.eps_alpha", "schedule.eps_beta", "schedule.eps_R")):
            raise ConfigurationError("a constant schedule takes no eps amplitudes")
    except ConfigurationError as exc:
        raise ConfigurationError(f"{first_present('schedule.')}{exc}") from None

    grid_keys = ("grid.x_min", "grid.x_max", "grid.n_points")
    grid_spec = None
    if any(k in values for k in grid_keys):
        if grid_keys[2] in values:
            checked(grid_keys[2], lambda: Grid(-1.0, 1.0, get("grid.n_points")))
        if not ("grid.x_min" in values and "grid.x_max" in values):
            # a bare n_points keeps the default interval
            base = default_grid(params, shift=schedule.max_shift(params))
            grid_spec = (get("grid.x_min", base.x_min), get("grid.x_max", base.x_max), get("grid.n_points", base.n_points))
        else:
            grid_spec = (get("grid.x_min"), get("grid.x_max"), get("grid.n_points", 2048))
        checked(next(k for k in grid_keys if k in values), lambda: Grid(*grid_spec))

    time = TimeSpec(
        t0=get("time.t0", 0.0), t1=get("time.t1"), dt=get("time.dt", DEFAULT_DT), t_check=get("time.t_check")
    )
    if not time.dt > 0:
        raise ConfigurationError(f"line {values['time.dt'][1]}: dt must be positive")
    if time.t1 is not None and not time.t1 > time.t0:
        raise ConfigurationError(f"line {values['time.t1'][1]}: t1 must exceed t0")

    n_max = get("levels.n_max")
    if n_max is not None and not 0 <= n_max <= 10:
        raise ConfigurationError(f"line {values['levels.n_max'][1]}: levels.n_max must lie in [0, 10]")

    return ExperimentConfig(
        experiments=names,
        params=params,
        schedule=schedule,
        grid_spec=grid_spec,
        time=time,
        tolerances=tolerances,
        output_dir=Path(get("output_dir", "adiabath-out")),
        n_max=n_max,
    )
