"""Sinusoidal target tasks, inverse dynamics and trajectory error norms."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IncompatibleTrajectoryError, InvalidSpecError

# published defaults for the ultimate task
ULTIMATE_AMPLITUDE = 0.2
ANGULAR_FREQUENCY = 2.0 * math.pi / 3.0
DURATION = 30.0
SAMPLE_RATE = 100.0


class Unit(str, enum.Enum):
    RADIANS = "rad"
    NEWTON_METERS = "N*m"


@dataclass(frozen=True)
class TaskSpec:
    """A sine wave ``amplitude * sin(angular_frequency * t)`` on a uniform grid."""

    amplitude: float = ULTIMATE_AMPLITUDE
    angular_frequency: float = ANGULAR_FREQUENCY
    duration: float = DURATION
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        for name in ("amplitude", "angular_frequency", "duration", "sample_rate"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidSpecError(f"{name} must be a finite number, got {value!r}")
        if self.amplitude < 0:
            raise InvalidSpecError(f"amplitude must be >= 0, got {self.amplitude}")
        for name in ("angular_frequency", "duration", "sample_rate"):
            if getattr(self, name) <= 0:
                raise InvalidSpecError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.n_samples < 2:
            raise InvalidSpecError(
                f"duration * sample_rate must give at least 2 samples, got {self.n_samples}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def with_amplitude(self, amplitude: float) -> "TaskSpec":
        return TaskSpec(amplitude, self.angular_frequency, self.duration, self.sample_rate)

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled time series tagged with a physical unit."""

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)
    unit: Unit

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidSpecError("trajectory samples must be a non-empty 1-D sequence")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidSpecError(f"dt must be positive and finite, got {self.dt}")
        if not np.all(np.isfinite(samples)):
            raise InvalidSpecError("trajectory samples must be finite")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "unit", Unit(self.unit))

    def __len__(self):
        return self.samples.size

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.dt

    def combinable(self, other: "Trajectory") -> bool:
        return (self.t0 == other.t0 and self.dt == other.dt
                and len(self) == len(other) and self.unit == other.unit)

    def replace(self, samples, unit=None) -> "Trajectory":
        """Same grid, new samples (and optionally a new unit)."""
        return Trajectory(self.t0, self.dt, samples, self.unit if unit is None else unit)


def _require_spec(spec):
    if not isinstance(spec, TaskSpec):
        raise InvalidSpecError(f"expected a TaskSpec, got {type(spec).__name__}")


def sample_task(spec: TaskSpec) -> Trajectory:
    """Sample the target joint angle on ``t = i / sample_rate, i < N``."""
    _require_spec(spec)
    t = spec.times()
    return Trajectory(0.0, spec.dt, spec.amplitude * np.sin(spec.angular_frequency * t),
                      Unit.RADIANS)


def motor_command_coefficients(spec: TaskSpec, params) -> tuple[float, float]:
    """Return ``(sin_amp, cos_amp)`` of the torque that makes the joint track the task.

    Substituting ``theta = A sin(wt)`` into ``J th'' + B th' + K th`` gives
    ``(K - J w^2) A sin(wt) + B w A cos(wt)``.
    """
    a, w = spec.amplitude, spec.angular_frequency
    return (params.stiffness - params.inertia * w * w) * a, params.viscosity * w * a


def target_motor_command(spec: TaskSpec, params) -> Trajectory:
    _require_spec(spec)
    sin_amp, cos_amp = motor_command_coefficients(spec, params)
    wt = spec.angular_frequency * spec.times()
    return Trajectory(0.0, spec.dt, sin_amp * np.sin(wt) + cos_amp * np.cos(wt),
                      Unit.NEWTON_METERS)


def error_l2_norm(target: Trajectory, actual: Trajectory) -> float:
    """Euclidean norm of the per-sample difference (not RMS)."""
    if not target.combinable(actual):
        raise IncompatibleTrajectoryError(
            f"cannot compare trajectories: t0 {target.t0}/{actual.t0}, dt {target.dt}/"
            f"{actual.dt}, length {len(target)}/{len(actual)}, unit {target.unit.value}/"
            f"{actual.unit.value}")
    diff = target.samples - actual.samples
    return float(math.sqrt(math.fsum(diff * diff)))
