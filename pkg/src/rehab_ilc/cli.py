"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path

from . import BACKEND, __version__, narx
from . import config as cfgmod
from . import results
from .errors import DivergenceError, InvalidLesionError, InvalidSpecError, TrainingStalledError
from .experiment import pretrain, run_sweep

log = logging.getLogger("rehab_ilc")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_config(args) -> dict:
    if args.preset is None and args.config is None:
        raise UsageError("one of --config or --preset is required")
    doc = cfgmod.load_preset(args.preset) if args.preset else {}
    if args.config:
        doc = cfgmod.merge(doc, cfgmod.load_file(args.config))
    if getattr(args, "seeds", None):
        doc = cfgmod.merge(doc, {"experiment": {"seeds": args.seeds}})
    return cfgmod.resolve(doc)


def _manifest(args, resolved, inputs, outputs, failures=()):
    return {
        "command": args.command,
        "config_hash": cfgmod.config_hash(resolved) if resolved else None,
        "tool_version": __version__,
        "backend": BACKEND,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "inputs": inputs,
        "outputs": outputs,
        "failures": list(failures),
    }


def _write_json(path, doc):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _sibling(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _inputs(args):
    out = {}
    if getattr(args, "config", None):
        out["config"] = str(args.config)
    if getattr(args, "preset", None):
        out["preset"] = args.preset
    return out


def cmd_validate_config(args):
    resolved = _load_config(args)
    print(json.dumps({"config_hash": cfgmod.config_hash(resolved), "config": resolved},
                     indent=2))
    return EXIT_OK


def cmd_pretrain(args):
    resolved = _load_config(args)
    base = cfgmod.template(resolved)
    seed = base.seeds[0]
    net, report = pretrain(base, seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(narx.dumps(net))
    report_path = _sibling(args.out, ".report.json")
    _write_json(report_path, {"variant": base.network_variant, "seed": seed,
                              **report.to_dict()})
    _write_json(_sibling(args.out, ".manifest.json"),
                _manifest(args, resolved, _inputs(args),
                          {"network": str(args.out), "report": str(report_path)}))
    log.info("pretrained %s seed %d: sse %.4g -> %.4g", base.network_variant, seed,
             report.initial_sse, report.final_sse)
    return EXIT_OK


def _variant_for(net, resolved):
    for name, topo in narx.VARIANTS.items():
        if topo.hidden_layers == net.topology.hidden_layers:
            return name
    return resolved["narx"]["variant"]


def cmd_lesion(args):
    resolved = _load_config(args)
    try:
        net = narx.loads(Path(args.network).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read network {args.network}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.network}: not a valid network file ({exc})") from None
    variant = _variant_for(net, resolved)
    removals = resolved["narx"]["lesion"].get(variant)
    if removals is None:
        raise UsageError(f"no lesion counts configured for variant {variant}")
    seed = resolved["experiment"]["seeds"][0]
    try:
        lesioned = narx.lesion(net, removals, seed)
    except InvalidLesionError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(narx.dumps(lesioned))
    _write_json(_sibling(args.out, ".manifest.json"),
                _manifest(args, resolved, {**_inputs(args), "network": str(args.network)},
                          {"network": str(args.out)}))
    return EXIT_OK


def cmd_run(args):
    resolved = _load_config(args)
    scenarios = cfgmod.scenarios(resolved)
    digest = cfgmod.config_hash(resolved)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.resolved.json", resolved)
    outputs, failures = {}, []
    for result in run_sweep(scenarios, jobs=args.jobs):
        outputs[result.config.name] = results.write_scenario(out, result, digest)
        failures += [{"scenario": result.config.name, **f} for f in result.failures]
        if result.stats is not None:
            log.info("%s: final mean amplitude %.4f, mean error %.4f", result.config.name,
                     result.stats.amplitude_mean[-1], result.stats.error_mean[-1])
    _write_json(out / "manifest.json",
                _manifest(args, resolved, _inputs(args), outputs, failures))
    if failures:
        log.error("%d seed run(s) failed; see %s", len(failures), out / "manifest.json")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_figures(args):
    if not args.summaries:
        raise UsageError("at least one summary.json path is required")
    try:
        written = results.write_figures(args.summaries, args.out, args.seed)
    except results.IncompatibleSummariesError as exc:
        raise UsageError(str(exc)) from None
    except OSError as exc:
        raise UsageError(f"cannot read summary: {exc}") from None
    _write_json(Path(args.out) / "manifest.json",
                _manifest(args, None, {"summaries": [str(p) for p in args.summaries]},
                          {"figures": written}))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="rehab-ilc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_flags(p, seeds=True):
        p.add_argument("--config", type=Path, help="JSON config (merged over --preset)")
        p.add_argument("--preset", choices=cfgmod.PRESETS)
        if seeds:
            p.add_argument("--seeds", help="seed override, e.g. 0..4 or 1,3,5")

    p = sub.add_parser("validate-config", help="check a config and print it resolved")
    config_flags(p)
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("pretrain", help="train a network on the ultimate task")
    config_flags(p)
    p.add_argument("--out", required=True, type=Path, help="network JSON to write")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("lesion", help="remove hidden nodes from a saved network")
    config_flags(p)
    p.add_argument("--network", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_lesion)

    p = sub.add_parser("run", help="run every configured scenario over all seeds")
    config_flags(p)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("figures", help="export plot-ready CSVs from run summaries")
    p.add_argument("summaries", nargs="*", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, help="seed for the error-vs-amplitude trace")
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, UsageError) as exc:
        print(f"rehab-ilc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, TrainingStalledError, InvalidSpecError, OSError) as exc:
        print(f"rehab-ilc {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
