"""JSON run configuration: parsing, defaults, validation and hashing.

A document has the sections ``task``, ``joint``, ``narx``, ``controller``
and ``experiment``. Only the four ``task`` fields are required; everything
else falls back to the published defaults. :func:`resolve` returns the fully
populated document that :func:`scenarios` turns into ``ScenarioConfig``s.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import replace
from importlib import resources

from . import narx
from .controllers import ControllerConfig, Law
from .elbow import JointParams
from .errors import InvalidSpecError
from .experiment import Condition, Patient, ScenarioConfig
from .task import TaskSpec


class ConfigError(ValueError):
    """Bad configuration; ``field`` names the offending key path when known."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


_REQUIRED = object()

SCHEMA = {
    "task": {
        "amplitude": _REQUIRED,
        "angular_frequency": _REQUIRED,
        "duration": _REQUIRED,
        "sample_rate": _REQUIRED,
    },
    "joint": {"inertia": 0.144, "viscosity": 0.22, "stiffness": 4.96, "perturb": False},
    "narx": {
        "variant": "NARX1",
        "hidden_layers": None,
        "exogenous_delays": [0, 1],
        "feedback_delays": [1, 2],
        "pretrain_epochs": 100,
        "per_trial_epochs": 0,
        "open_loop_epochs": 0,
        "lesion": {"NARX1": [3], "NARX2": [2, 1]},
    },
    "controller": {
        "alpha": 0.2,
        "beta": 1.0,
        "threshold": 0.7,
        "r_init": None,
        "r_star": None,
        "clamp_to_r_star": True,
    },
    "experiment": {
        "trials": 20,
        "seeds": "0..99",
        "master_seed": 0,
        "scenarios": "paper",
        "initial_state": "tracking",
        "patient": "narx",
    },
}

PRESETS = ("paper",)


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("rehab_ilc").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def parse_text(text: str, source: str = "<config>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return doc


def load_file(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins, non-dict values replace wholesale."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "lesion":
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_seeds(spec) -> list:
    """Accept ``"a..b"`` (inclusive), ``"1,4,7"``, a single int, or a list of ints."""
    if isinstance(spec, bool):
        raise ConfigError("seeds must be integers", "experiment.seeds")
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, list):
        if not spec or not all(isinstance(s, int) and not isinstance(s, bool) for s in spec):
            raise ConfigError("seed list must be a non-empty list of integers",
                              "experiment.seeds")
        if len(set(spec)) != len(spec):
            raise ConfigError(f"duplicate seeds in {spec!r}", "experiment.seeds")
        return list(spec)
    if isinstance(spec, str):
        seeds = []
        try:
            for part in spec.split(","):
                part = part.strip()
                if ".." in part:
                    lo, hi = (int(v) for v in part.split(".."))
                    if hi < lo:
                        raise ValueError
                    seeds.extend(range(lo, hi + 1))
                else:
                    seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse seed range {spec!r}", "experiment.seeds") from None
        if len(set(seeds)) != len(seeds):
            raise ConfigError(f"duplicate seeds in {spec!r}", "experiment.seeds")
        return seeds
    raise ConfigError(f"unsupported seed specification {spec!r}", "experiment.seeds")


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {json.dumps(value)}", path)
    if integer and not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {json.dumps(value)}", path)
    return value


def _int_list(value, path):
    if not isinstance(value, list):
        raise ConfigError("expected a list of integers", path)
    return [_number(v, f"{path}[{i}]", integer=True) for i, v in enumerate(value)]


def resolve(doc: dict) -> dict:
    """Fill defaults and type-check; the result is canonical for hashing."""
    out = {}
    for section, fields in SCHEMA.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError("section must be an object", section)
        unknown = sorted(set(given) - set(fields))
        if unknown:
            raise ConfigError("unknown field", f"{section}.{unknown[0]}")
        resolved = {}
        for name, default in fields.items():
            path = f"{section}.{name}"
            if name in given:
                resolved[name] = copy.deepcopy(given[name])
            elif default is _REQUIRED:
                raise ConfigError("missing required field", path)
            else:
                resolved[name] = copy.deepcopy(default)
        out[section] = resolved
    extra = sorted(set(doc) - set(SCHEMA))
    if extra:
        raise ConfigError(f"unknown section(s) {', '.join(extra)}")

    for name in SCHEMA["task"]:
        _number(out["task"][name], f"task.{name}")
    for name in ("inertia", "viscosity", "stiffness"):
        _number(out["joint"][name], f"joint.{name}")
    if not isinstance(out["joint"]["perturb"], bool):
        raise ConfigError("expected true/false", "joint.perturb")

    nx = out["narx"]
    if nx["variant"] not in narx.VARIANTS:
        raise ConfigError(f"expected one of {sorted(narx.VARIANTS)}", "narx.variant")
    if nx["hidden_layers"] is not None:
        nx["hidden_layers"] = _int_list(nx["hidden_layers"], "narx.hidden_layers")
    nx["exogenous_delays"] = _int_list(nx["exogenous_delays"], "narx.exogenous_delays")
    nx["feedback_delays"] = _int_list(nx["feedback_delays"], "narx.feedback_delays")
    for name in ("pretrain_epochs", "per_trial_epochs", "open_loop_epochs"):
        _number(nx[name], f"narx.{name}", integer=True)
    if not isinstance(nx["lesion"], dict):
        raise ConfigError("expected an object mapping variant to removal counts", "narx.lesion")
    for variant, counts in nx["lesion"].items():
        _int_list(counts, f"narx.lesion.{variant}")

    ctrl = out["controller"]
    for name in ("alpha", "beta", "threshold"):
        _number(ctrl[name], f"controller.{name}")
    if ctrl["r_star"] is None:
        ctrl["r_star"] = out["task"]["amplitude"]
    _number(ctrl["r_star"], "controller.r_star")
    if ctrl["r_init"] is None:
        ctrl["r_init"] = 0.2 * ctrl["r_star"]
    _number(ctrl["r_init"], "controller.r_init")
    if not isinstance(ctrl["clamp_to_r_star"], bool):
        raise ConfigError("expected true/false", "controller.clamp_to_r_star")

    ex = out["experiment"]
    _number(ex["trials"], "experiment.trials", integer=True)
    _number(ex["master_seed"], "experiment.master_seed", integer=True)
    ex["seeds"] = parse_seeds(ex["seeds"])
    if ex["initial_state"] not in ("tracking", "rest"):
        raise ConfigError("expected 'tracking' or 'rest'", "experiment.initial_state")
    if ex["patient"] not in [p.value for p in Patient]:
        raise ConfigError(f"expected one of {[p.value for p in Patient]}", "experiment.patient")
    ex["scenarios"] = _resolve_scenarios(ex["scenarios"], nx)

    # let the domain constructors check ranges, reporting the section
    for section, build in (("task", _task), ("joint", _joint), ("controller", _controller)):
        try:
            build(out)
        except InvalidSpecError as exc:
            raise ConfigError(str(exc), section) from None
    return out


def _resolve_scenarios(value, nx):
    if value == "paper":
        return [{"variant": v, "condition": c, "law": law}
                for v in ("NARX1", "NARX2") for c in ("healthy", "stroke")
                for law in ("ilc", "rule_based")]
    if value == "single":
        return [{"variant": nx["variant"], "condition": "healthy", "law": "ilc"}]
    if not isinstance(value, list) or not value:
        raise ConfigError("expected 'paper', 'single' or a non-empty list", "experiment.scenarios")
    out = []
    for i, item in enumerate(value):
        path = f"experiment.scenarios[{i}]"
        if not isinstance(item, dict):
            raise ConfigError("expected an object", path)
        unknown = sorted(set(item) - {"variant", "condition", "law"})
        if unknown:
            raise ConfigError("unknown field", f"{path}.{unknown[0]}")
        entry = {"variant": item.get("variant", nx["variant"]),
                 "condition": item.get("condition", "healthy"),
                 "law": item.get("law", "ilc")}
        if entry["variant"] not in narx.VARIANTS:
            raise ConfigError(f"unknown variant {entry['variant']!r}", f"{path}.variant")
        if entry["condition"] not in [c.value for c in Condition]:
            raise ConfigError(f"unknown condition {entry['condition']!r}", f"{path}.condition")
        if entry["law"] not in [law.value for law in Law]:
            raise ConfigError(f"unknown law {entry['law']!r}", f"{path}.law")
        out.append(entry)
    names = [(e["variant"], e["condition"], e["law"]) for e in out]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate scenarios", "experiment.scenarios")
    return out


def _task(doc):
    t = doc["task"]
    return TaskSpec(float(t["amplitude"]), float(t["angular_frequency"]), float(t["duration"]),
                    float(t["sample_rate"]))


def _joint(doc):
    j = doc["joint"]
    return JointParams(float(j["inertia"]), float(j["viscosity"]), float(j["stiffness"]))


def _controller(doc):
    c = doc["controller"]
    return ControllerConfig(float(c["alpha"]), float(c["beta"]), float(c["r_star"]),
                            float(c["threshold"]), float(c["r_init"]), c["clamp_to_r_star"])


def config_hash(resolved: dict) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def template(resolved: dict) -> ScenarioConfig:
    nx, ex = resolved["narx"], resolved["experiment"]
    try:
        return ScenarioConfig(
            network_variant=nx["variant"],
            controller=_controller(resolved),
            task=_task(resolved),
            joint=_joint(resolved),
            trials=ex["trials"],
            seeds=tuple(ex["seeds"]),
            pretrain_epochs=nx["pretrain_epochs"],
            per_trial_epochs=nx["per_trial_epochs"],
            master_seed=ex["master_seed"],
            hidden_layers=None if nx["hidden_layers"] is None else tuple(nx["hidden_layers"]),
            exogenous_delays=tuple(nx["exogenous_delays"]),
            feedback_delays=tuple(nx["feedback_delays"]),
            train_options=narx.TrainOptions(open_loop_epochs=nx["open_loop_epochs"]),
            tracking_start=ex["initial_state"] == "tracking",
            perturb_joint=resolved["joint"]["perturb"],
            patient=ex["patient"],
        )
    except (InvalidSpecError, narx.InvalidTopologyError) as exc:
        raise ConfigError(str(exc)) from None


def scenarios(resolved: dict) -> list:
    base = template(resolved)
    lesions = resolved["narx"]["lesion"]
    out = []
    for entry in resolved["experiment"]["scenarios"]:
        removals = lesions.get(entry["variant"])
        out.append(replace(base, network_variant=entry["variant"],
                           condition=Condition(entry["condition"]), law=Law(entry["law"]),
                           lesion_removals=None if removals is None else tuple(removals)))
    return out

