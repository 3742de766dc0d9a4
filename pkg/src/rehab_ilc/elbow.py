"""Second-order elbow joint: ``tau = J th'' + B th' + K th``.

Forward integration uses classical RK4 at the sampling step of the torque
trajectory; :func:`analytic_response` is the closed-form solution used to
check it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DivergenceError, InvalidSpecError, UnsupportedRegimeError
from .task import TaskSpec, Trajectory, Unit

# mean values with their reported spread; the spread only feeds optional perturbation
INERTIA, INERTIA_SD = 0.144, 0.014
VISCOSITY, VISCOSITY_SD = 0.22, 0.10
STIFFNESS, STIFFNESS_SD = 4.96, 1.16


@dataclass(frozen=True)
class JointParams:
    inertia: float = INERTIA
    viscosity: float = VISCOSITY
    stiffness: float = STIFFNESS

    def __post_init__(self):
        for name in ("inertia", "viscosity", "stiffness"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidSpecError(f"{name} must be finite")
        if self.inertia <= 0 or self.stiffness <= 0 or self.viscosity < 0:
            raise InvalidSpecError(
                f"need J > 0, B >= 0, K > 0; got J={self.inertia}, B={self.viscosity}, "
                f"K={self.stiffness}")

    @property
    def natural_frequency(self) -> float:
        return math.sqrt(self.stiffness / self.inertia)

    @property
    def damping_ratio(self) -> float:
        return self.viscosity / (2.0 * math.sqrt(self.stiffness * self.inertia))

    def perturbed(self, rng: np.random.Generator, scale: float = 1.0) -> "JointParams":
        """Draw J, B, K from Gaussians around the means, clamped positive."""
        floor = 1e-6
        j, b, k = rng.normal(
            [self.inertia, self.viscosity, self.stiffness],
            [scale * INERTIA_SD, scale * VISCOSITY_SD, scale * STIFFNESS_SD])
        return JointParams(max(j, floor), max(b, 0.0), max(k, floor))


@dataclass(frozen=True)
class JointState:
    theta: float = 0.0
    theta_dot: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.theta_dot)):
            raise InvalidSpecError("joint state must be finite")


REST = JointState(0.0, 0.0)


def tracking_start(spec: TaskSpec) -> JointState:
    """Initial state that lies on ``A sin(wt)`` at ``t = 0``."""
    return JointState(0.0, spec.amplitude * spec.angular_frequency)


def _cubic_weights(frac):
    """Lagrange weights on nodes -1, 0, 1, 2 evaluated at ``frac``."""
    x = frac
    return np.array([
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ])


def refine(samples: np.ndarray, points_per_interval: int) -> np.ndarray:
    """Resample onto a grid ``points_per_interval`` times finer by cubic interpolation.

    Original samples are kept exactly. Interior intervals use the centred
    four-point stencil; the first and last intervals shift the stencil
    inward. Fewer than four samples falls back to linear interpolation.
    """
    x = np.asarray(samples, dtype=np.float64)
    n, m = x.size, int(points_per_interval)
    if m < 1:
        raise ValueError("points_per_interval must be >= 1")
    if n < 2 or m == 1:
        return x.copy()
    fracs = np.arange(m) / m
    if n < 4:
        out = x[:-1, None] + fracs[None, :] * (x[1:] - x[:-1])[:, None]
    else:
        # stencil for interval i starts at i-1, shifted inward at both ends
        idx = np.arange(n - 1)
        start = np.clip(idx - 1, 0, n - 4)
        stencil = x[start[:, None] + np.arange(4)]
        offset = idx - start - 1
        out = np.empty((n - 1, m))
        for col, frac in enumerate(fracs):
            weights = np.stack([_cubic_weights(frac + o) for o in (-1.0, 0.0, 1.0)])
            out[:, col] = np.sum(stencil * weights[offset + 1], axis=1)
        out[:, 0] = x[:-1]
    return np.append(out.ravel(), x[-1])


# RK4 steps per sample interval
SUBSTEPS = 3


def integrate(tau: Trajectory, params: JointParams, initial: JointState = REST,
              substeps: int = SUBSTEPS):
    """Return ``(theta, theta_dot)`` arrays on the torque grid."""
    if tau.unit is not Unit.NEWTON_METERS:
        raise InvalidSpecError(f"torque trajectory expected, got unit {tau.unit.value}")
    theta, omega, bad = _backend.kernels.rk4_simulate(
        refine(tau.samples, 2 * substeps), int(substeps), float(tau.dt),
        float(params.inertia), float(params.viscosity), float(params.stiffness),
        float(initial.theta), float(initial.theta_dot))
    if bad >= 0:
        raise DivergenceError("elbow joint integration", bad)
    return theta, omega


def simulate(tau: Trajectory, params: JointParams = JointParams(),
             initial: JointState = REST) -> Trajectory:
    """Integrate the joint forward under the torque trajectory ``tau``.

    Parameters
    ----------
    tau : Trajectory
        Motor command in N*m on a uniform grid.
    params : JointParams
    initial : JointState
        State at the first grid point; ``output[0] == initial.theta``.

    Returns
    -------
    Trajectory
        Joint angle in radians on the same grid.
    """
    theta, _ = integrate(tau, params, initial)
    return Trajectory(tau.t0, tau.dt, theta, Unit.RADIANS)


def _grid(grid):
    if isinstance(grid, Trajectory):
        return grid.t0, grid.dt, len(grid)
    t0, dt, n = grid
    return float(t0), float(dt), int(n)


def analytic_response(params: JointParams, tau_sin_amp: float, tau_cos_amp: float,
                      omega: float, initial: JointState, grid) -> Trajectory:
    """Exact response to ``tau(t) = S sin(wt) + C cos(wt)`` for an underdamped joint.

    ``grid`` is a Trajectory or a ``(t0, dt, n)`` tuple; ``initial`` is the
    state at ``t0`` and the forcing phase uses absolute time.
    """
    j, b, k = params.inertia, params.viscosity, params.stiffness
    if b * b >= 4.0 * j * k:
        raise UnsupportedRegimeError(
            f"closed form only covers the underdamped case (B^2={b * b:.4g} >= 4JK={4 * j * k:.4g})")
    t0, dt, n = _grid(grid)
    t = t0 + np.arange(n) * dt

    d = k - j * omega * omega
    e = b * omega
    det = d * d + e * e
    a_sin = (d * tau_sin_amp + e * tau_cos_amp) / det
    a_cos = (d * tau_cos_amp - e * tau_sin_amp) / det
    wt0 = omega * t0
    p0 = a_sin * math.sin(wt0) + a_cos * math.cos(wt0)
    pd0 = omega * (a_sin * math.cos(wt0) - a_cos * math.sin(wt0))

    sigma = b / (2.0 * j)
    wd = math.sqrt(k / j - sigma * sigma)
    c1 = initial.theta - p0
    c2 = (initial.theta_dot - pd0 + sigma * c1) / wd
    s = t - t0
    homogeneous = np.exp(-sigma * s) * (c1 * np.cos(wd * s) + c2 * np.sin(wd * s))
    particular = a_sin * np.sin(omega * t) + a_cos * np.cos(omega * t)
    return Trajectory(t0, dt, particular + homogeneous, Unit.RADIANS)
