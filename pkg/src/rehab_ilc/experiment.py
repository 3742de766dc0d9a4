"""Rehabilitation sessions and multi-seed experiments.

One session pretrains a NARX patient on the ultimate task, optionally
lesions it, then runs the trial loop: sample the task at the current
amplitude, derive the target motor command, pass it through the patient,
integrate the elbow joint and score the angle error; the controller turns
that error into the next amplitude.
"""
from __future__ import annotations

import enum
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import controllers, elbow, narx
from .controllers import ControllerConfig, ControllerState, Law
from .errors import DivergenceError, InvalidSpecError, TrainingStalledError
from .streams import rng_stream
from .task import TaskSpec, error_l2_norm, sample_task, target_motor_command

log = logging.getLogger(__name__)


class Condition(str, enum.Enum):
    HEALTHY = "healthy"
    STROKE = "stroke"


class Patient(str, enum.Enum):
    NARX = "narx"
    # stubs for checking the loop without a trained network
    PERFECT = "perfect"
    SILENT = "silent"


@dataclass(frozen=True)
class ScenarioConfig:
    network_variant: str = "NARX1"
    condition: Condition = Condition.HEALTHY
    law: Law = Law.ILC
    controller: ControllerConfig = ControllerConfig()
    task: TaskSpec = TaskSpec()
    joint: elbow.JointParams = elbow.JointParams()
    trials: int = 20
    seeds: tuple = tuple(range(100))
    pretrain_epochs: int = 100
    per_trial_epochs: int = 0
    master_seed: int = 0
    # None -> the standard hidden widths for network_variant
    hidden_layers: tuple | None = None
    exogenous_delays: tuple = (0, 1)
    feedback_delays: tuple = (1, 2)
    # None -> the standard removal counts for network_variant
    lesion_removals: tuple | None = None
    train_options: narx.TrainOptions = narx.TrainOptions()
    tracking_start: bool = True
    perturb_joint: bool = False
    patient: Patient = Patient.NARX

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition(self.condition))
        object.__setattr__(self, "law", Law(self.law))
        object.__setattr__(self, "patient", Patient(self.patient))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.network_variant not in narx.VARIANTS and self.hidden_layers is None:
            raise InvalidSpecError(f"unknown network variant {self.network_variant!r}")
        if self.trials < 1:
            raise InvalidSpecError(f"trials must be >= 1, got {self.trials}")
        if not self.seeds:
            raise InvalidSpecError("seed list must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidSpecError("seed list contains duplicates")
        if self.pretrain_epochs < 1:
            raise InvalidSpecError(f"pretrain_epochs must be >= 1, got {self.pretrain_epochs}")
        if self.per_trial_epochs < 0:
            raise InvalidSpecError("per_trial_epochs must be >= 0")

    @property
    def name(self) -> str:
        return f"{self.network_variant.lower()}-{self.condition.value}-{self.law.value}"

    @property
    def topology(self) -> narx.NarxTopology:
        hidden = self.hidden_layers
        if hidden is None:
            hidden = narx.VARIANTS[self.network_variant].hidden_layers
        return narx.NarxTopology(tuple(hidden), tuple(self.exogenous_delays),
                                 tuple(self.feedback_delays))

    @property
    def removals(self) -> tuple:
        if self.lesion_removals is not None:
            return tuple(self.lesion_removals)
        return narx.STROKE_LESIONS[self.network_variant]

    def ultimate_task(self) -> TaskSpec:
        return self.task.with_amplitude(self.controller.r_star)


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    trial: int
    amplitude: float
    error_norm: float
    update_term: float = 0.0
    clamped: bool = False


@dataclass
class AggregateStats:
    """Per-trial statistics across seeds (population standard deviation)."""

    trials: int
    seeds: tuple
    error_mean: np.ndarray
    error_std: np.ndarray
    amplitude_mean: np.ndarray
    amplitude_std: np.ndarray
    std_kind: str = "population"

    @property
    def amplitude_std_trial_mean(self) -> float:
        return float(np.mean(self.amplitude_std))

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seeds": list(self.seeds),
            "n_seeds": len(self.seeds),
            "std_kind": self.std_kind,
            "error_mean": self.error_mean.tolist(),
            "error_std": self.error_std.tolist(),
            "amplitude_mean": self.amplitude_mean.tolist(),
            "amplitude_std": self.amplitude_std.tolist(),
            "amplitude_std_trial_mean": self.amplitude_std_trial_mean,
        }


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    records: list
    stats: AggregateStats | None
    failures: list = field(default_factory=list)


# -- patient ----------------------------------------------------------

def joint_for_seed(cfg: ScenarioConfig, seed: int) -> elbow.JointParams:
    if not cfg.perturb_joint:
        return cfg.joint
    return cfg.joint.perturbed(rng_stream(seed, "joint", cfg.master_seed))


@functools.lru_cache(maxsize=64)
def _pretrain_cached(topology, seed, master_seed, task, joint, epochs, options):
    tau = target_motor_command(task, joint)
    net = narx.init(topology, seed, master_seed)
    net = narx.fit_normalization(net, tau, tau)
    return narx.train(net, tau, tau, epochs, options)


def pretrain(cfg: ScenarioConfig, seed: int):
    """Train a fresh network on the ultimate task's motor command; returns (net, report).

    Healthy and stroke scenarios of the same variant and seed share this
    result, so it is memoised per process.
    """
    return _pretrain_cached(cfg.topology, int(seed), cfg.master_seed, cfg.ultimate_task(),
                            joint_for_seed(cfg, seed), cfg.pretrain_epochs, cfg.train_options)


def prepare_patient(cfg: ScenarioConfig, seed: int) -> narx.NarxNetwork:
    net, _ = pretrain(cfg, seed)
    if cfg.condition is Condition.STROKE:
        net = narx.lesion(net, cfg.removals, seed)
    return net


def perfect_patient(tau):
    return tau


def silent_patient(tau):
    return tau.replace(np.zeros(len(tau)))


# -- trial loop -------------------------------------------------------

def run_trial(patient, amplitude: float, cfg: ScenarioConfig, seed: int = 0,
              trial: int = 1, joint: elbow.JointParams | None = None) -> TrialRecord:
    """Execute one trial at ``amplitude`` and score the joint-angle error.

    ``patient`` is any callable mapping the target motor command to the
    executed one (a :class:`~rehab_ilc.narx.NarxNetwork` or a stub).
    """
    if not 0 < amplitude <= cfg.controller.r_star * (1 + 1e-12):
        raise InvalidSpecError(f"amplitude {amplitude} outside (0, r*={cfg.controller.r_star}]")
    joint = cfg.joint if joint is None else joint
    spec = cfg.task.with_amplitude(amplitude)
    target = sample_task(spec)
    tau = patient(target_motor_command(spec, joint))
    initial = elbow.tracking_start(spec) if cfg.tracking_start else elbow.REST
    try:
        theta = elbow.simulate(tau, joint, initial)
    except DivergenceError as exc:
        raise exc.tagged(seed=seed, trial=trial) from None
    return TrialRecord(seed, trial, amplitude, error_l2_norm(target, theta))


def _physical_evaluator(cfg: ScenarioConfig, seed: int):
    joint = joint_for_seed(cfg, seed)
    if cfg.patient is Patient.PERFECT:
        state = {"patient": perfect_patient}
    elif cfg.patient is Patient.SILENT:
        state = {"patient": silent_patient}
    else:
        state = {"patient": prepare_patient(cfg, seed)}

    def evaluate(amplitude, trial):
        try:
            record = run_trial(state["patient"], amplitude, cfg, seed, trial, joint)
        except DivergenceError as exc:
            raise exc.tagged(seed=seed, trial=trial) from None
        if cfg.per_trial_epochs > 0 and isinstance(state["patient"], narx.NarxNetwork):
            tau = target_motor_command(cfg.task.with_amplitude(amplitude), joint)
            state["patient"], _ = narx.train(state["patient"], tau, tau, cfg.per_trial_epochs,
                                             cfg.train_options)
        return record.error_norm

    return evaluate


def run_session(cfg: ScenarioConfig, seed: int, evaluate=None) -> list:
    """Run ``cfg.trials`` trials for one seed.

    ``evaluate(amplitude, trial) -> error_norm`` replaces the simulated
    patient when given.
    """
    if evaluate is None:
        evaluate = _physical_evaluator(cfg, seed)
    ctrl = cfg.controller
    state = ControllerState.first(ctrl)
    records = []
    for k in range(1, cfg.trials + 1):
        step = controllers.step(state, ctrl, cfg.law)
        amplitude = controllers.update(state, ctrl, cfg.law)
        clamped = ctrl.clamp_to_r_star and state.r_prev + step > ctrl.r_star
        error = float(evaluate(amplitude, k))
        if not math.isfinite(error) or error < 0:
            raise InvalidSpecError(f"trial {k} produced an invalid error norm {error}")
        records.append(TrialRecord(int(seed), k, amplitude, error, step, bool(clamped)))
        state = state.advance(amplitude, error)
    return records


# -- aggregation ------------------------------------------------------

def aggregate(sessions: dict, trials: int) -> AggregateStats | None:
    """Per-trial mean/std over seeds; ``sessions`` maps seed -> list of records."""
    if not sessions:
        return None
    seeds = tuple(sorted(sessions))
    err = np.array([[r.error_norm for r in sessions[s]] for s in seeds])
    amp = np.array([[r.amplitude for r in sessions[s]] for s in seeds])
    if err.shape != (len(seeds), trials):
        raise ValueError(f"expected {trials} records per seed, got shape {err.shape}")
    return AggregateStats(trials, seeds, err.mean(axis=0), err.std(axis=0),
                          amp.mean(axis=0), amp.std(axis=0))


_RECOVERABLE = (DivergenceError, TrainingStalledError, np.linalg.LinAlgError)


def _seed_worker(scenarios, seed, evaluator_factory=None):
    out = []
    for cfg in scenarios:
        try:
            evaluate = None if evaluator_factory is None else evaluator_factory(cfg, seed)
            out.append(("ok", run_session(cfg, seed, evaluate)))
        except _RECOVERABLE as exc:
            log.warning("seed %d failed in %s: %s", seed, cfg.name, exc)
            out.append(("failed", {"seed": seed, "error": type(exc).__name__,
                                   "message": str(exc)}))
    return out


def run_sweep(scenarios, jobs: int = 1, evaluator_factory=None) -> list:
    """Run several scenarios over the union of their seeds.

    Work is split by seed so that scenarios sharing a pretrained network
    reuse it inside one worker. Output order and values do not depend on
    ``jobs``.
    """
    scenarios = list(scenarios)
    seeds = sorted({s for cfg in scenarios for s in cfg.seeds})
    worker = functools.partial(_seed_worker, evaluator_factory=evaluator_factory)
    groups = [[cfg for cfg in scenarios if seed in cfg.seeds] for seed in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(worker, groups, seeds))
    else:
        per_seed = [worker(g, s) for g, s in zip(groups, seeds)]

    results = []
    for cfg in scenarios:
        sessions, failures = {}, []
        for seed, group, outcome in zip(seeds, groups, per_seed):
            if cfg not in group:
                continue
            status, payload = outcome[group.index(cfg)]
            if status == "ok":
                sessions[seed] = payload
            else:
                failures.append(payload)
        records = [r for seed in sorted(sessions) for r in sessions[seed]]
        results.append(ExperimentResult(cfg, records, aggregate(sessions, cfg.trials), failures))
    return results


def run_experiment(cfg: ScenarioConfig, jobs: int = 1, evaluator_factory=None):
    """Run every seed of one scenario and aggregate; failed seeds are listed, not fatal."""
    return run_sweep([cfg], jobs, evaluator_factory)[0]


def paper_scenarios(template: ScenarioConfig) -> list:
    """The eight variant x condition x law combinations built from one template."""
    return [replace(template, network_variant=v, condition=c, law=law)
            for v in ("NARX1", "NARX2")
            for c in (Condition.HEALTHY, Condition.STROKE)
            for law in (Law.ILC, Law.RULE_BASED)]
