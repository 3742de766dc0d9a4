import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rehab_ilc.elbow import JointParams
from rehab_ilc.errors import IncompatibleTrajectoryError, InvalidSpecError
from rehab_ilc.task import (TaskSpec, Trajectory, Unit, error_l2_norm, sample_task,
                            target_motor_command)

W = 2 * math.pi / 3


def test_zero_amplitude_gives_zero_trajectory():
    traj = sample_task(TaskSpec(0.0, W, 30.0, 100.0))
    assert len(traj) == 3000
    assert not traj.samples.any()
    assert traj.unit is Unit.RADIANS and traj.t0 == 0.0


def test_sample_at_quarter_period():
    traj = sample_task(TaskSpec(0.2, W, 30.0, 100.0))
    assert traj.samples[75] == pytest.approx(0.2 * math.sin(math.pi / 2), abs=1e-12)


def test_trial_one_amplitude_peak():
    traj = sample_task(TaskSpec(0.04, W, 30.0, 100.0))
    assert np.max(np.abs(traj.samples)) == pytest.approx(0.04, abs=1e-9)


def test_grid_is_half_open():
    traj = sample_task(TaskSpec())
    assert traj.times()[-1] == pytest.approx(29.99)
    assert traj.dt == pytest.approx(0.01)


@pytest.mark.parametrize("kwargs", [
    {"amplitude": -0.1},
    {"angular_frequency": 0.0},
    {"duration": -1.0},
    {"sample_rate": 0.0},
    {"amplitude": float("nan")},
    {"duration": 0.01, "sample_rate": 100.0},
])
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidSpecError):
        TaskSpec(**kwargs)


def test_motor_command_zero_task():
    tau = target_motor_command(TaskSpec(0.0), JointParams())
    assert not tau.samples.any()
    assert tau.unit is Unit.NEWTON_METERS


def test_motor_command_values():
    tau = target_motor_command(TaskSpec(0.2), JointParams())
    assert tau.samples[0] == pytest.approx(0.22 * W * 0.2, abs=1e-12)
    assert tau.samples[0] == pytest.approx(0.09215, abs=1e-5)
    # t = 0.75 s is a quarter period: only the sine-phase term survives
    assert tau.samples[75] == pytest.approx((4.96 - 0.144 * W**2) * 0.2, abs=1e-12)
    assert tau.samples[75] == pytest.approx(0.86566, abs=1e-5)


def test_error_norm_examples():
    spec = TaskSpec(0.2)
    a = sample_task(spec)
    assert error_l2_norm(a, a) == 0.0
    shifted = a.replace(a.samples + 0.01)
    assert error_l2_norm(a, shifted) == pytest.approx(0.01 * math.sqrt(3000), rel=1e-12)
    assert error_l2_norm(a, shifted) == pytest.approx(0.54772, abs=1e-5)
    one = a.samples.copy()
    one[123] += 0.222
    assert error_l2_norm(a, a.replace(one)) == pytest.approx(0.222, abs=1e-15)


def test_error_norm_rejects_mismatch():
    a = sample_task(TaskSpec(0.2))
    with pytest.raises(IncompatibleTrajectoryError):
        error_l2_norm(a, target_motor_command(TaskSpec(0.2), JointParams()))
    with pytest.raises(IncompatibleTrajectoryError):
        error_l2_norm(a, sample_task(TaskSpec(0.2, duration=20.0)))
    with pytest.raises(IncompatibleTrajectoryError):
        error_l2_norm(a, Trajectory(0.005, a.dt, a.samples, Unit.RADIANS))


def test_trajectory_validation():
    with pytest.raises(InvalidSpecError):
        Trajectory(0.0, 0.01, [], Unit.RADIANS)
    with pytest.raises(InvalidSpecError):
        Trajectory(0.0, 0.0, [1.0], Unit.RADIANS)
    with pytest.raises(InvalidSpecError):
        Trajectory(0.0, 0.01, [1.0, float("inf")], Unit.RADIANS)


finite = st.floats(-10, 10, allow_nan=False)
vectors = st.lists(finite, min_size=1, max_size=40)


def _trio(draw_lists):
    n = min(len(v) for v in draw_lists)
    return [Trajectory(0.0, 0.01, v[:n], Unit.RADIANS) for v in draw_lists]


@given(vectors, vectors, vectors)
def test_norm_is_a_metric(x, y, z):
    a, b, c = _trio([x, y, z])
    dab = error_l2_norm(a, b)
    assert dab >= 0
    assert dab == error_l2_norm(b, a)
    assert error_l2_norm(a, c) <= dab + error_l2_norm(b, c) + 1e-9


@given(vectors, vectors, st.floats(-100, 100, allow_nan=False))
@settings(max_examples=200)
def test_norm_scales_linearly(x, y, c):
    a, b = _trio([x, y])
    scaled = error_l2_norm(a.replace(c * a.samples), b.replace(c * b.samples))
    assert scaled == pytest.approx(abs(c) * error_l2_norm(a, b), rel=1e-12, abs=1e-12)
