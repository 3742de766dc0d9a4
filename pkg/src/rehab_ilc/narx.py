"""Sensorimotor NARX networks.

A network maps delayed copies of the target motor command ``u`` and of its
own past output ``y`` through sigmoid hidden layers to a linear output.
Training runs Levenberg-Marquardt on the closed-loop (parallel) recursion
with Bayesian regularisation of the weights; lesioning switches hidden
nodes off.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .errors import (DivergenceError, IncompatibleTrajectoryError, InvalidLesionError,
                     InvalidSpecError, InvalidTopologyError, TrainingStalledError)
from .streams import rng_stream
from .task import Trajectory, Unit

log = logging.getLogger(__name__)

SCHEMA = "rehab_ilc.narx"
SCHEMA_VERSION = 1
INIT_RANGE = 0.5


@dataclass(frozen=True)
class NarxTopology:
    hidden_layers: tuple = (7,)
    exogenous_delays: tuple = (0, 1)
    feedback_delays: tuple = (1, 2)
    hidden_activation: str = "sigmoid"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        object.__setattr__(self, "exogenous_delays", tuple(int(d) for d in self.exogenous_delays))
        object.__setattr__(self, "feedback_delays", tuple(int(d) for d in self.feedback_delays))
        if not self.hidden_layers:
            raise InvalidTopologyError("at least one hidden layer is required")
        if any(w < 1 for w in self.hidden_layers):
            raise InvalidTopologyError(f"hidden layer widths must be >= 1: {self.hidden_layers}")
        if not self.exogenous_delays or any(d < 0 for d in self.exogenous_delays):
            raise InvalidTopologyError("need at least one non-negative exogenous delay")
        if any(d < 1 for d in self.feedback_delays):
            raise InvalidTopologyError("feedback delays must be >= 1 (no algebraic loop)")
        if self.hidden_activation != "sigmoid" or self.output_activation != "linear":
            raise InvalidTopologyError("only sigmoid hidden / linear output layers are supported")

    @property
    def n_inputs(self) -> int:
        return len(self.exogenous_delays) + len(self.feedback_delays)

    @property
    def widths(self) -> tuple:
        return (self.n_inputs, *self.hidden_layers, 1)

    @property
    def max_delay(self) -> int:
        return max(self.exogenous_delays + self.feedback_delays)

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum(w[i + 1] * w[i] + w[i + 1] for i in range(len(w) - 1))


VARIANTS = {
    "NARX1": NarxTopology(hidden_layers=(7,)),
    "NARX2": NarxTopology(hidden_layers=(4, 3)),
}
# hidden nodes removed per layer to simulate a stroke
STROKE_LESIONS = {"NARX1": (3,), "NARX2": (2, 1)}


@dataclass(frozen=True, eq=False)
class NarxNetwork:
    """Weights, normalisation and lesion state of one sensorimotor network.

    ``params`` is the flat parameter vector in layer order, each layer as a
    row-major ``(n_out, n_in)`` weight matrix followed by its bias.
    Normalisation maps a raw value ``x`` to ``(x - center) / half_range``.
    """

    topology: NarxTopology
    params: np.ndarray = field(repr=False)
    input_scale: tuple = (0.0, 1.0)
    output_scale: tuple = (0.0, 1.0)
    active_mask: tuple = ()
    seed: int = 0
    lesion_seed: int | None = None
    master_seed: int = 0

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (self.topology.n_params,):
            raise InvalidTopologyError(
                f"expected {self.topology.n_params} parameters, got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise InvalidSpecError("network parameters must be finite")
        params.flags.writeable = False
        object.__setattr__(self, "params", params)
        mask = self.active_mask or tuple((True,) * w for w in self.topology.hidden_layers)
        mask = tuple(tuple(bool(v) for v in layer) for layer in mask)
        if tuple(len(m) for m in mask) != self.topology.hidden_layers:
            raise InvalidTopologyError("active mask does not match hidden layer widths")
        object.__setattr__(self, "active_mask", mask)
        for name in ("input_scale", "output_scale"):
            center, half = (float(v) for v in getattr(self, name))
            if not (np.isfinite(center) and np.isfinite(half) and half > 0):
                raise InvalidSpecError(f"{name} must be finite with positive half range")
            object.__setattr__(self, name, (center, half))

    # -- structure -----------------------------------------------------
    def layers(self):
        """List of ``(weights, bias)`` views, one per weight layer."""
        out, off = [], 0
        w = self.topology.widths
        for n_in, n_out in zip(w[:-1], w[1:]):
            weights = self.params[off:off + n_out * n_in].reshape(n_out, n_in)
            off += n_out * n_in
            out.append((weights, self.params[off:off + n_out]))
            off += n_out
        return out

    @property
    def active_widths(self) -> tuple:
        return tuple(sum(layer) for layer in self.active_mask)

    @property
    def n_active_nodes(self) -> int:
        return sum(self.active_widths)

    def active_param_index(self) -> np.ndarray:
        """Indices into ``params`` of the parameters of the compacted network.

        Lesioned nodes are deleted with their incoming and outgoing weights;
        the returned order is the flat layout of the reduced topology.
        """
        w = self.topology.widths
        keep = [np.arange(w[0])]
        keep += [np.flatnonzero(np.array(m, dtype=bool)) for m in self.active_mask]
        keep.append(np.arange(1))
        index, off = [], 0
        for l in range(len(w) - 1):
            n_in, n_out = w[l], w[l + 1]
            rows, cols = keep[l + 1], keep[l]
            index.append((off + rows[:, None] * n_in + cols[None, :]).ravel())
            off += n_out * n_in
            index.append(off + rows)
            off += n_out
        return np.concatenate(index).astype(np.int64)

    def compact(self):
        """Return ``(theta, widths)`` of the network with lesioned nodes deleted."""
        widths = np.array((self.topology.n_inputs, *self.active_widths, 1), dtype=np.int64)
        return np.ascontiguousarray(self.params[self.active_param_index()]), widths

    # -- normalisation ------------------------------------------------
    def normalize_input(self, values):
        c, h = self.input_scale
        return (np.asarray(values, dtype=np.float64) - c) / h

    def normalize_output(self, values):
        c, h = self.output_scale
        return (np.asarray(values, dtype=np.float64) - c) / h

    def denormalize_output(self, values):
        c, h = self.output_scale
        return np.asarray(values, dtype=np.float64) * h + c

    def with_params(self, params) -> "NarxNetwork":
        return replace(self, params=params)

    def __call__(self, u: Trajectory) -> Trajectory:
        return forward_closed_loop(self, u)


def init(topology: NarxTopology, seed: int, master_seed: int = 0) -> NarxNetwork:
    """Draw all weights and biases uniformly from ``[-0.5, 0.5]``."""
    if not isinstance(topology, NarxTopology):
        raise InvalidTopologyError(f"expected NarxTopology, got {type(topology).__name__}")
    rng = rng_stream(seed, "init", master_seed)
    params = rng.uniform(-INIT_RANGE, INIT_RANGE, topology.n_params)
    return NarxNetwork(topology, params, seed=int(seed), master_seed=int(master_seed))


def _range_scale(values) -> tuple:
    lo, hi = float(np.min(values)), float(np.max(values))
    half = 0.5 * (hi - lo)
    return (0.5 * (hi + lo), half if half > 0 else 1.0)


def fit_normalization(net: NarxNetwork, u: Trajectory, target: Trajectory) -> NarxNetwork:
    """Freeze affine maps sending the ranges of ``u`` and ``target`` onto [-1, 1]."""
    return replace(net, input_scale=_range_scale(u.samples),
                   output_scale=_range_scale(target.samples))


def _delays(topology):
    return (np.array(topology.exogenous_delays, dtype=np.int64),
            np.array(topology.feedback_delays, dtype=np.int64))


def forward_closed_loop(net: NarxNetwork, u: Trajectory) -> Trajectory:
    """Run the network in parallel mode, feeding back its own past outputs.

    Inputs before the start of the sequence are zero in normalised units.
    """
    if len(u) <= net.topology.max_delay:
        raise InvalidSpecError(
            f"input needs more than {net.topology.max_delay} samples, got {len(u)}")
    theta, widths = net.compact()
    exo, fb = _delays(net.topology)
    y, bad = _backend.kernels.narx_forward(theta, widths, net.normalize_input(u.samples),
                                           exo, fb)
    if bad >= 0:
        raise DivergenceError("NARX closed loop", bad)
    return Trajectory(u.t0, u.dt, net.denormalize_output(y), Unit.NEWTON_METERS)


# -- training ---------------------------------------------------------

@dataclass(frozen=True)
class TrainOptions:
    mu_init: float = 1e-3
    mu_factor: float = 10.0
    mu_max: float = 1e10
    # series-parallel (teacher forced) epochs run before the closed-loop ones
    open_loop_epochs: int = 0


@dataclass
class EpochRecord:
    epoch: int
    mode: str
    objective_before: float
    objective_after: float
    sse: float
    ssw: float
    alpha_reg: float
    beta_reg: float
    gamma: float
    mu: float


@dataclass
class TrainingReport:
    epochs_run: int = 0
    initial_sse: float = float("nan")
    final_sse: float = float("nan")
    final_weight_norm: float = float("nan")
    effective_parameters: float = float("nan")
    alpha_reg: float = 0.0
    beta_reg: float = 1.0
    # set when training ended before the requested epoch count
    stop_reason: str | None = None
    history: list = field(default_factory=list)

    @property
    def sse_reduction(self) -> float:
        return self.initial_sse / self.final_sse if self.final_sse > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "initial_sse": self.initial_sse,
            "final_sse": self.final_sse,
            "final_weight_norm": self.final_weight_norm,
            "effective_parameters": self.effective_parameters,
            "alpha_reg": self.alpha_reg,
            "beta_reg": self.beta_reg,
            "stop_reason": self.stop_reason,
            "history": [vars(rec) for rec in self.history],
        }


class _Objective:
    """Closed-loop (or teacher-forced) residuals and Jacobian over compact params."""

    def __init__(self, net, u_norm, t_norm, widths, teacher):
        self.kernels = _backend.kernels
        self.widths = widths
        self.u = u_norm
        self.t = t_norm
        self.teacher = teacher
        self.exo, self.fb = _delays(net.topology)

    def residuals(self, theta):
        y, bad = self.kernels.narx_forward(theta, self.widths, self.u, self.exo, self.fb,
                                           self.teacher)
        return None if bad >= 0 else y - self.t

    def jacobian(self, theta):
        y, jac, bad = self.kernels.narx_jacobian(theta, self.widths, self.u, self.exo,
                                                 self.fb, self.teacher)
        if bad >= 0:
            raise DivergenceError("NARX closed loop (training)", bad)
        return y - self.t, jac


def train(net: NarxNetwork, u: Trajectory, target: Trajectory, epochs: int,
          options: TrainOptions = TrainOptions()):
    """Levenberg-Marquardt with Bayesian regularisation.

    Minimises ``F = beta_reg * E_D + alpha_reg * E_W`` with ``E_D`` the sum
    of squared (normalised) output errors over the closed-loop run and
    ``E_W`` the sum of squared active parameters. After every accepted step
    the hyperparameters are re-estimated from the Gauss-Newton Hessian::

        gamma     = N_w - 2 alpha_reg tr(H^-1)
        alpha_reg = gamma / (2 E_W)
        beta_reg  = (N - gamma) / (2 E_D)

    Lesioned nodes keep their weights and are excluded from the parameter
    vector. Normalisation is not touched; see :func:`fit_normalization`.

    Returns
    -------
    (NarxNetwork, TrainingReport)

    Raises
    ------
    TrainingStalledError
        If the damped Gauss-Newton system is still singular (or its step
        diverges) at maximum damping; ``.report`` holds the history so far.
        A well-posed step that merely fails to lower ``F`` at maximum
        damping means the objective sits at its rounding floor: training
        stops there and ``report.stop_reason`` says so.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if not u.combinable(target.replace(target.samples, unit=u.unit)) or target.unit != u.unit:
        raise IncompatibleTrajectoryError("training input and target must share grid and unit")
    if len(u) <= net.topology.max_delay:
        raise InvalidSpecError("training sequence shorter than the largest delay")

    theta, widths = net.compact()
    index = net.active_param_index()
    n_w, n_obs = theta.size, len(u)
    u_norm = net.normalize_input(u.samples)
    t_norm = net.normalize_output(target.samples)
    eye = np.eye(n_w)

    alpha, beta, mu = 0.0, 1.0, options.mu_init
    report = TrainingReport(alpha_reg=alpha, beta_reg=beta)
    objective = None
    mode = None
    open_until = options.open_loop_epochs
    for epoch in range(1, epochs + 1):
        new_mode = "open" if epoch <= open_until else "closed"
        if new_mode != mode:
            mode = new_mode
            objective = _Objective(net, u_norm, t_norm, widths,
                                   t_norm if mode == "open" else None)
            e, jac = objective.jacobian(theta)
        ed, ew = float(e @ e), float(theta @ theta)
        if epoch == 1:
            report.initial_sse = ed
        f_before = beta * ed + alpha * ew
        hess = beta * (jac.T @ jac) + alpha * eye
        grad = beta * (jac.T @ e) + alpha * theta

        converged = False
        while True:
            well_posed = False
            try:
                step = np.linalg.solve(hess + mu * eye, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = theta + step
                e_trial = objective.residuals(trial)
                if e_trial is not None:
                    well_posed = True
                    f_trial = beta * float(e_trial @ e_trial) + alpha * float(trial @ trial)
                    if f_trial < f_before:
                        break
            mu *= options.mu_factor
            if mu > options.mu_max:
                report.final_sse = ed
                if not well_posed:
                    raise TrainingStalledError(
                        f"singular or divergent step at epoch {epoch} with damping above "
                        f"{options.mu_max:g}", report)
                converged = True
                break
        if converged:
            mu = options.mu_init
            if mode == "open" and epoch < epochs:
                open_until = epoch  # the teacher-forced phase is done, go closed loop
                continue
            report.final_weight_norm = float(np.sqrt(ew))
            report.stop_reason = f"no descent at maximum damping in epoch {epoch}"
            log.debug("training stopped at its floor: %s", report.stop_reason)
            break
        theta = trial
        mu = max(mu / options.mu_factor, 1e-20)

        e, jac = objective.jacobian(theta)
        ed, ew = float(e @ e), float(theta @ theta)
        if alpha > 0:
            h_new = beta * (jac.T @ jac) + alpha * eye
            gamma = n_w - alpha * float(np.trace(np.linalg.inv(h_new)))
        else:
            gamma = float(n_w)
        gamma = min(max(gamma, 0.0), float(n_w))
        if ew > 0:
            alpha = gamma / (2.0 * ew)
        if ed > 0 and n_obs > gamma:
            beta = (n_obs - gamma) / (2.0 * ed)

        report.history.append(EpochRecord(epoch, mode, f_before, f_trial, ed, ew,
                                          alpha, beta, gamma, mu))
        report.epochs_run = epoch
        report.final_sse = ed
        report.final_weight_norm = float(np.sqrt(ew))
        report.effective_parameters = gamma
        report.alpha_reg, report.beta_reg = alpha, beta

    full = np.array(net.params)
    full[index] = theta
    log.debug("trained %s: sse %.4g -> %.4g in %d epochs", net.topology.hidden_layers,
              report.initial_sse, report.final_sse, report.epochs_run)
    return net.with_params(full), report


def objective_gradient(net: NarxNetwork, u: Trajectory, target: Trajectory,
                       alpha_reg: float = 0.0, beta_reg: float = 1.0) -> np.ndarray:
    """Gradient of ``beta_reg * E_D + alpha_reg * E_W`` over the compact parameters (BPTT)."""
    theta, widths = net.compact()
    exo, fb = _delays(net.topology)
    grad, _, bad = _backend.kernels.narx_gradient(
        theta, widths, net.normalize_input(u.samples), net.normalize_output(target.samples),
        exo, fb)
    if bad >= 0:
        raise DivergenceError("NARX closed loop (gradient)", bad)
    return beta_reg * grad + 2.0 * alpha_reg * theta


def objective_value(net: NarxNetwork, u: Trajectory, target: Trajectory,
                    alpha_reg: float = 0.0, beta_reg: float = 1.0) -> float:
    theta, widths = net.compact()
    exo, fb = _delays(net.topology)
    y, bad = _backend.kernels.narx_forward(theta, widths, net.normalize_input(u.samples),
                                           exo, fb)
    if bad >= 0:
        raise DivergenceError("NARX closed loop", bad)
    e = y - net.normalize_output(target.samples)
    return beta_reg * float(e @ e) + alpha_reg * float(theta @ theta)


# -- lesioning --------------------------------------------------------

def lesion(net: NarxNetwork, removals, seed: int) -> NarxNetwork:
    """Switch off ``removals[i]`` randomly chosen active nodes in hidden layer ``i``.

    Weights are left untouched; removed nodes output exactly zero.
    """
    removals = tuple(int(r) for r in removals)
    if len(removals) != len(net.topology.hidden_layers):
        raise InvalidLesionError(
            f"need one removal count per hidden layer ({len(net.topology.hidden_layers)}), "
            f"got {removals}")
    for i, (count, layer) in enumerate(zip(removals, net.active_mask)):
        if count < 0 or count > sum(layer):
            raise InvalidLesionError(
                f"cannot remove {count} nodes from layer {i} with {sum(layer)} active")
    if not any(removals):
        return net
    rng = rng_stream(seed, "lesion", net.master_seed)
    mask = []
    for count, layer in zip(removals, net.active_mask):
        layer = list(layer)
        active = [j for j, on in enumerate(layer) if on]
        for j in rng.choice(active, size=count, replace=False):
            layer[int(j)] = False
        mask.append(tuple(layer))
    return replace(net, active_mask=tuple(mask), lesion_seed=int(seed))


# -- persistence ------------------------------------------------------

def to_dict(net: NarxNetwork) -> dict:
    t = net.topology
    return {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "topology": {
            "hidden_layers": list(t.hidden_layers),
            "exogenous_delays": list(t.exogenous_delays),
            "feedback_delays": list(t.feedback_delays),
            "hidden_activation": t.hidden_activation,
            "output_activation": t.output_activation,
        },
        "normalization": {
            "input": {"center": net.input_scale[0], "half_range": net.input_scale[1]},
            "output": {"center": net.output_scale[0], "half_range": net.output_scale[1]},
        },
        "layers": [
            {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in net.layers()
        ],
        "active_mask": [list(m) for m in net.active_mask],
        "seeds": {"init": net.seed, "lesion": net.lesion_seed, "master": net.master_seed},
    }


def from_dict(doc: dict) -> NarxNetwork:
    if doc.get("schema") != SCHEMA:
        raise InvalidSpecError(f"not a network document (schema={doc.get('schema')!r})")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidSpecError(f"unsupported schema_version {doc.get('schema_version')!r}")
    topo = NarxTopology(**doc["topology"])
    params = []
    for layer, (n_in, n_out) in zip(doc["layers"], zip(topo.widths[:-1], topo.widths[1:])):
        if list(layer["shape"]) != [n_out, n_in]:
            raise InvalidTopologyError(f"layer shape {layer['shape']} != {[n_out, n_in]}")
        params.extend(layer["weights"])
        params.extend(layer["bias"])
    norm = doc["normalization"]
    seeds = doc.get("seeds", {})
    return NarxNetwork(
        topo, np.array(params, dtype=np.float64),
        input_scale=(norm["input"]["center"], norm["input"]["half_range"]),
        output_scale=(norm["output"]["center"], norm["output"]["half_range"]),
        active_mask=tuple(tuple(m) for m in doc["active_mask"]),
        seed=seeds.get("init", 0), lesion_seed=seeds.get("lesion"),
        master_seed=seeds.get("master", 0))


def dumps(net: NarxNetwork) -> str:
    return json.dumps(to_dict(net), indent=2) + "\n"


def loads(text: str) -> NarxNetwork:
    return from_dict(json.loads(text))
