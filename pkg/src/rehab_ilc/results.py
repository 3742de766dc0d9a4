"""On-disk formats for trial records, summaries and figure data."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

from .experiment import ExperimentResult, TrialRecord

TRIALS_HEADER = ["seed", "trial", "amplitude_rad", "error_l2", "update_rad", "clamped"]


class IncompatibleSummariesError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trials_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIALS_HEADER)
        for r in records:
            writer.writerow([r.seed, r.trial, _fmt(r.amplitude), _fmt(r.error_norm),
                             _fmt(r.update_term), int(r.clamped)])


def read_trials_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRIALS_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [TrialRecord(int(s), int(k), float(a), float(e), float(u), c == "1")
                for s, k, a, e, u, c in reader]


def summary_dict(result: ExperimentResult, config_hash: str) -> dict:
    cfg = result.config
    return {
        "scenario": cfg.name,
        "network_variant": cfg.network_variant,
        "condition": cfg.condition.value,
        "law": cfg.law.value,
        "config_hash": config_hash,
        "trials_file": "trials.csv",
        "stats": None if result.stats is None else result.stats.to_dict(),
        "failures": result.failures,
    }


def write_scenario(out_dir, result: ExperimentResult, config_hash: str) -> dict:
    """Write ``trials.csv`` and ``summary.json`` under ``out_dir/<scenario>``."""
    target = Path(out_dir) / result.config.name
    target.mkdir(parents=True, exist_ok=True)
    write_trials_csv(target / "trials.csv", result.records)
    summary = summary_dict(result, config_hash)
    (target / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return {"trials": str(target / "trials.csv"), "summary": str(target / "summary.json")}


def load_summary(path) -> tuple:
    """Return ``(summary, records)``; records come from the sibling trials file."""
    path = Path(path)
    summary = json.loads(path.read_text())
    if summary.get("stats") is None:
        raise IncompatibleSummariesError(f"{path}: summary has no statistics (all seeds failed)")
    records = read_trials_csv(path.parent / summary.get("trials_file", "trials.csv"))
    return summary, records


def error_vs_amplitude(records, seed: int) -> list:
    """``(amplitude, mean error)`` pairs for one seed, repeated amplitudes averaged."""
    groups = defaultdict(list)
    for r in records:
        if r.seed == seed:
            groups[r.amplitude].append(r.error_norm)
    return [(a, sum(v) / len(v)) for a, v in sorted(groups.items())]


def _labels(summaries):
    seen = defaultdict(int)
    labels = []
    for s in summaries:
        name = s["scenario"]
        seen[name] += 1
        labels.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return labels


def write_figures(summary_paths, out_dir, seed: int | None = None) -> list:
    """Emit plot-ready CSVs from one or more run summaries.

    Produces ``fig_error_vs_trial.csv`` and ``fig_amplitude_vs_trial.csv``
    (one mean and std column per scenario) and ``fig_error_vs_amplitude.csv``
    (long format, one seed per scenario).
    """
    if not summary_paths:
        raise ValueError("at least one summary is required")
    loaded = [load_summary(p) for p in summary_paths]
    summaries = [s for s, _ in loaded]
    counts = {s["stats"]["trials"] for s in summaries}
    if len(counts) != 1:
        raise IncompatibleSummariesError(f"summaries disagree on trial count: {sorted(counts)}")
    trials = counts.pop()
    labels = _labels(summaries)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for fname, key in (("fig_error_vs_trial.csv", "error"),
                       ("fig_amplitude_vs_trial.csv", "amplitude")):
        path = out_dir / fname
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial"] + [f"{lab}_{stat}" for lab in labels
                                         for stat in ("mean", "std")])
            for k in range(trials):
                row = [k + 1]
                for s in summaries:
                    row += [_fmt(s["stats"][f"{key}_mean"][k]), _fmt(s["stats"][f"{key}_std"][k])]
                writer.writerow(row)
        written.append(str(path))

    path = out_dir / "fig_error_vs_amplitude.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "seed", "amplitude_rad", "error_l2"])
        for label, summary, (_, records) in zip(labels, summaries, loaded):
            chosen = seed if seed is not None else min(summary["stats"]["seeds"])
            for amp, err in error_vs_amplitude(records, chosen):
                writer.writerow([label, chosen, _fmt(amp), _fmt(err)])
    written.append(str(path))
    return written
