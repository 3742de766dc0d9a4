import json
from dataclasses import replace

import numpy as np
import pytest

from rehab_ilc import _backend, narx
from rehab_ilc.elbow import JointParams
from rehab_ilc.errors import (DivergenceError, InvalidLesionError, InvalidSpecError,
                              InvalidTopologyError, TrainingStalledError)
from rehab_ilc.task import TaskSpec, Trajectory, Unit, error_l2_norm, target_motor_command

REFERENCE = json.loads(
    (__import__("pathlib").Path(__file__).parent / "oracles" / "training_reference.json")
    .read_text())


@pytest.fixture(scope="module")
def tau_star():
    return target_motor_command(TaskSpec(0.2), JointParams())


@pytest.fixture(scope="module")
def trained_narx1(tau_star):
    net = narx.fit_normalization(narx.init(narx.VARIANTS["NARX1"], 0), tau_star, tau_star)
    return narx.train(net, tau_star, tau_star, 100)


def short_torque(n=50, seed=0):
    t = np.arange(n) * 0.01
    return Trajectory(0.0, 0.01, 0.8 * np.sin(2.1 * t) + 0.1 * np.cos(2.1 * t),
                      Unit.NEWTON_METERS)


# -- topology / init -----------------------------------------------------

def test_variants():
    assert narx.VARIANTS["NARX1"].hidden_layers == (7,)
    assert narx.VARIANTS["NARX2"].hidden_layers == (4, 3)
    assert sum(narx.VARIANTS["NARX1"].hidden_layers) == sum(narx.VARIANTS["NARX2"].hidden_layers)


@pytest.mark.parametrize("kw", [
    {"hidden_layers": ()},
    {"hidden_layers": (0,)},
    {"feedback_delays": (0, 1)},
    {"exogenous_delays": ()},
    {"hidden_activation": "tanh"},
])
def test_invalid_topology(kw):
    with pytest.raises(InvalidTopologyError):
        narx.init(narx.NarxTopology(**kw), 0)


def test_init_deterministic_and_shaped():
    a = narx.init(narx.VARIANTS["NARX1"], 0)
    b = narx.init(narx.VARIANTS["NARX1"], 0)
    assert a.params.tobytes() == b.params.tobytes()
    (w0, _), (w1, b1) = a.layers()
    assert w0.shape == (7, 4) and w1.shape == (1, 7) and b1.shape == (1,)
    assert a.n_active_nodes == 7
    assert np.all(np.abs(a.params) <= 0.5)
    assert not np.array_equal(a.params, narx.init(narx.VARIANTS["NARX1"], 1).params)


def test_params_are_immutable():
    net = narx.init(narx.VARIANTS["NARX2"], 3)
    with pytest.raises(ValueError):
        net.params[0] = 1.0


# -- forward ------------------------------------------------------------

def test_zero_network_outputs_zero(backend):
    net = narx.init(narx.VARIANTS["NARX1"], 0).with_params(np.zeros(narx.VARIANTS["NARX1"].n_params))
    out = narx.forward_closed_loop(net, short_torque())
    assert not out.samples.any()


def test_zero_output_layer_with_zero_input(backend):
    net = narx.init(narx.VARIANTS["NARX2"], 0)
    params = np.array(net.params)
    params[-4:] = 0.0  # output weights and bias; hidden sigmoid(0) = 0.5 is irrelevant
    zero = Trajectory(0.0, 0.01, np.zeros(50), Unit.NEWTON_METERS)
    assert not narx.forward_closed_loop(net.with_params(params), zero).samples.any()


def test_forward_needs_more_than_max_delay():
    net = narx.init(narx.VARIANTS["NARX1"], 0)
    with pytest.raises(InvalidSpecError):
        narx.forward_closed_loop(net, Trajectory(0.0, 0.01, [0.0, 1.0], Unit.NEWTON_METERS))


def test_forward_divergence_has_step():
    net = narx.init(narx.VARIANTS["NARX1"], 0)
    params = np.array(net.params)
    params[-8:] = 1e308
    with pytest.raises(DivergenceError) as info:
        narx.forward_closed_loop(net.with_params(params), short_torque())
    assert info.value.step == 0


def test_trained_network_fits_ultimate_task(trained_narx1, tau_star):
    net, _ = trained_narx1
    y = narx.forward_closed_loop(net, tau_star)
    ratio = error_l2_norm(tau_star, y) / np.linalg.norm(tau_star.samples)
    assert ratio <= 0.10
    assert ratio == pytest.approx(REFERENCE["relative_fit"], rel=0.05)


def test_normalization_round_trip(backend):
    """Stored normalisation equals folding the scales into the weights."""
    topo = narx.VARIANTS["NARX1"]
    base = narx.init(topo, 4)
    h_in, h_out = 2.0, 0.5
    net = replace(base, input_scale=(0.0, h_in), output_scale=(0.0, h_out))
    (w0, b0), (w1, b1) = base.layers()
    w0f = w0.copy()
    w0f[:, :2] /= h_in  # exogenous columns
    w0f[:, 2:] /= h_out  # feedback columns see raw outputs
    folded = base.with_params(np.concatenate([w0f.ravel(), b0, (h_out * w1).ravel(),
                                              h_out * b1]))
    u = short_torque(300)
    np.testing.assert_allclose(narx.forward_closed_loop(net, u).samples,
                               narx.forward_closed_loop(folded, u).samples, rtol=0, atol=1e-12)


def test_fit_normalization_maps_range_to_unit_interval(tau_star):
    net = narx.fit_normalization(narx.init(narx.VARIANTS["NARX1"], 0), tau_star, tau_star)
    scaled = net.normalize_input(tau_star.samples)
    assert scaled.min() == pytest.approx(-1.0) and scaled.max() == pytest.approx(1.0)


# -- training -----------------------------------------------------------

def test_gradient_check(backend):
    topo = narx.NarxTopology(hidden_layers=(2,))
    net = narx.init(topo, 11)
    u = short_torque(50)
    target = u.replace(0.9 * np.roll(u.samples, 2))
    grad = narx.objective_gradient(net, u, target, alpha_reg=0.05, beta_reg=1.3)
    h = 1e-6
    fd = np.empty_like(grad)
    for q in range(grad.size):
        p = np.array(net.params)
        p[q] += h
        fp = narx.objective_value(net.with_params(p), u, target, 0.05, 1.3)
        p[q] -= 2 * h
        fm = narx.objective_value(net.with_params(p), u, target, 0.05, 1.3)
        fd[q] = (fp - fm) / (2 * h)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


def test_single_epoch_does_not_increase_objective(backend):
    u = short_torque(120)
    net = narx.init(narx.VARIANTS["NARX2"], 5)
    _, report = narx.train(net, u, u, 1)
    rec = report.history[0]
    assert report.epochs_run == 1
    assert rec.objective_after <= rec.objective_before


def test_identity_target_sse_monotone():
    u = short_torque(300)
    net = narx.fit_normalization(narx.init(narx.NarxTopology(hidden_layers=(3,)), 2), u, u)
    _, report = narx.train(net, u, u, 30)
    sse = [report.initial_sse] + [r.sse for r in report.history]
    assert all(b <= a for a, b in zip(sse, sse[1:]))
    assert all(r.objective_after <= r.objective_before for r in report.history)


def test_training_reduces_error_by_reference_factor(trained_narx1):
    _, report = trained_narx1
    assert report.epochs_run == 100
    assert report.sse_reduction >= max(20.0, REFERENCE["min_factor"])
    assert 0 < report.effective_parameters <= narx.VARIANTS["NARX1"].n_params


def test_training_deterministic(tau_star):
    net = narx.fit_normalization(narx.init(narx.VARIANTS["NARX2"], 9), tau_star, tau_star)
    a, _ = narx.train(net, tau_star, tau_star, 5)
    b, _ = narx.train(net, tau_star, tau_star, 5)
    assert a.params.tobytes() == b.params.tobytes()


def test_open_loop_warmup_runs():
    u = short_torque(200)
    net = narx.fit_normalization(narx.init(narx.VARIANTS["NARX1"], 1), u, u)
    _, report = narx.train(net, u, u, 6, narx.TrainOptions(open_loop_epochs=3))
    assert [r.mode for r in report.history] == ["open"] * 3 + ["closed"] * 3


def test_training_stall_carries_report(monkeypatch):
    u = short_torque(60)
    net = narx.init(narx.VARIANTS["NARX1"], 0)
    kernels = _backend.kernels

    class Rejecting:
        narx_jacobian = staticmethod(kernels.narx_jacobian)

        @staticmethod
        def narx_forward(*args, **kwargs):
            y, _ = kernels.narx_forward(*args, **kwargs)
            return y, 0

    monkeypatch.setattr(_backend, "kernels", Rejecting)
    with pytest.raises(TrainingStalledError) as info:
        narx.train(net, u, u, 3)
    assert info.value.report.epochs_run == 0


def test_no_descent_at_max_damping_stops_cleanly(monkeypatch):
    u = short_torque(60)
    net = narx.init(narx.VARIANTS["NARX1"], 0)
    real = narx._Objective.residuals
    monkeypatch.setattr(narx._Objective, "residuals",
                        lambda self, theta: None if (r := real(self, theta)) is None else r + 1e3)
    trained, report = narx.train(net, u, u, 3)
    assert report.epochs_run == 0 and "maximum damping" in report.stop_reason
    assert trained.params.tobytes() == net.params.tobytes()


def test_training_leaves_lesioned_weights_alone(tau_star, trained_narx1):
    net, _ = trained_narx1
    lesioned = narx.lesion(net, (3,), 0)
    tuned, _ = narx.train(lesioned, tau_star, tau_star, 2)
    mask = np.ones(net.params.size, dtype=bool)
    mask[lesioned.active_param_index()] = False
    assert mask.sum() > 0
    np.testing.assert_array_equal(tuned.params[mask], lesioned.params[mask])
    assert tuned.active_mask == lesioned.active_mask


# -- lesioning ----------------------------------------------------------

def test_lesion_counts():
    n1 = narx.lesion(narx.init(narx.VARIANTS["NARX1"], 0), narx.STROKE_LESIONS["NARX1"], 0)
    n2 = narx.lesion(narx.init(narx.VARIANTS["NARX2"], 0), narx.STROKE_LESIONS["NARX2"], 0)
    assert n1.active_widths == (4,)
    assert n2.active_widths == (2, 2)


def test_lesion_keeps_weights_and_is_seeded():
    net = narx.init(narx.VARIANTS["NARX1"], 0)
    a = narx.lesion(net, (3,), 5)
    assert a.params.tobytes() == net.params.tobytes()
    assert a.active_mask == narx.lesion(net, (3,), 5).active_mask
    masks = {narx.lesion(net, (3,), s).active_mask for s in range(20)}
    assert len(masks) > 1


@pytest.mark.parametrize("variant,zero", [("NARX1", (0,)), ("NARX2", (0, 0))])
def test_zero_lesion_is_noop(variant, zero, tau_star):
    net = narx.init(narx.VARIANTS[variant], 0)
    out = narx.lesion(net, zero, 1)
    assert (narx.forward_closed_loop(out, tau_star).samples.tobytes()
            == narx.forward_closed_loop(net, tau_star).samples.tobytes())


@pytest.mark.parametrize("removals", [(8,), (-1,), (1, 1)])
def test_invalid_lesion(removals):
    with pytest.raises(InvalidLesionError):
        narx.lesion(narx.init(narx.VARIANTS["NARX1"], 0), removals, 0)


def _physically_reduced(net):
    """Delete lesioned rows and columns by hand."""
    layers = net.layers()
    keep_prev = np.arange(net.topology.n_inputs)
    params, widths = [], []
    for (w, b), mask in zip(layers[:-1], net.active_mask):
        keep = np.flatnonzero(mask)
        params += [w[np.ix_(keep, keep_prev)].ravel(), b[keep]]
        widths.append(keep.size)
        keep_prev = keep
    w, b = layers[-1]
    params += [w[:, keep_prev].ravel(), b]
    topo = replace(net.topology, hidden_layers=tuple(widths))
    return replace(net, topology=topo, params=np.concatenate(params), active_mask=())


@pytest.mark.parametrize("variant", ["NARX1", "NARX2"])
def test_lesion_equals_physical_deletion(variant, backend, tau_star):
    net = narx.fit_normalization(narx.init(narx.VARIANTS[variant], 3), tau_star, tau_star)
    lesioned = narx.lesion(net, narx.STROKE_LESIONS[variant], 8)
    reduced = _physically_reduced(lesioned)
    assert (narx.forward_closed_loop(lesioned, tau_star).samples.tobytes()
            == narx.forward_closed_loop(reduced, tau_star).samples.tobytes())


def test_lesioned_nodes_contribute_nothing(tau_star):
    net = narx.init(narx.VARIANTS["NARX1"], 3)
    lesioned = narx.lesion(net, (3,), 2)
    params = np.array(net.params)
    dead = [j for j, on in enumerate(lesioned.active_mask[0]) if not on]
    out_w = slice(7 * 4 + 7, 7 * 4 + 7 + 7)
    params[out_w][dead] = 0.0  # silence the outgoing weights instead
    np.testing.assert_allclose(narx.forward_closed_loop(lesioned, tau_star).samples,
                               narx.forward_closed_loop(net.with_params(params), tau_star).samples,
                               rtol=0, atol=1e-14)


# -- persistence ----------------------------------------------------------

def test_json_round_trip(trained_narx1):
    net = narx.lesion(trained_narx1[0], (3,), 4)
    text = narx.dumps(net)
    back = narx.loads(text)
    assert back.params.tobytes() == net.params.tobytes()
    assert back.active_mask == net.active_mask
    assert back.input_scale == net.input_scale and back.output_scale == net.output_scale
    assert narx.dumps(back) == text
    doc = json.loads(text)
    assert doc["schema_version"] == narx.SCHEMA_VERSION
    assert doc["topology"]["hidden_layers"] == [7]
    assert doc["seeds"] == {"init": 0, "lesion": 4, "master": 0}


def test_json_rejects_unknown_version(trained_narx1):
    doc = narx.to_dict(trained_narx1[0])
    doc["schema_version"] = 99
    with pytest.raises(InvalidSpecError):
        narx.from_dict(doc)
