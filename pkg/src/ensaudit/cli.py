"""``ensaudit`` command line: audit, sweep, diversity, calibration, postprocess, simulate, compare.

Exit codes: 0 success, 2 ingestion/validation error, 64 usage error,
70 internal error. Failures print one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import DEFAULT_BINS, ece_table, threshold_scan
from .data import (
    IngestionError,
    LabeledPredictions,
    load_predictions,
    load_runset,
    manifest_to_json,
    predictions_to_csv,
    validate_dataset,
)
from .diversity import diversity_cells, diversity_score
from .ensemble import SWEEP_METRICS, aggregate, ensemble_size_sweep, make_weights, sweep_to_csv
from .metrics import METRICS, auroc, confusion_from_decisions, fairness_report, report_from_confusion
from .postprocess import CONSTRAINTS, OBJECTIVES, expected_report, fit_group_thresholds, member_average_violation, sample_decisions, violation
from .report import emit_report, svg_line_chart
from .stats import DEFAULT_DELTA_METRICS, delta_rows_to_csv, delta_rows_to_markdown, delta_significance_table
from .synthetic import SyntheticConfig, generate_synthetic

EXIT_INGEST = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70

SUBCOMMANDS = ("audit", "sweep", "diversity", "calibration", "postprocess", "simulate", "compare")


class UsageError(Exception):
    pass


@dataclass
class CommandConfig:
    subcommand: str
    inputs: dict[str, str | None] = field(default_factory=dict)
    out: str = "."
    threshold: float = 0.5
    seed: int = 0
    constraint: str | None = None
    epsilon: float | str | None = None
    metrics: list[str] = field(default_factory=list)
    charts: bool = False
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise UsageError("threshold must lie in [0, 1]")
        if self.seed < 0:
            raise UsageError("seed must be >= 0")
        required = {
            "audit": ["data"],
            "sweep": ["data"],
            "diversity": ["data"],
            "calibration": ["data"],
            "compare": ["data"],
            "postprocess": ["fit", "apply"],
            "simulate": [],
        }[self.subcommand]
        for key in required:
            if not self.inputs.get(key):
                raise UsageError(f"{self.subcommand} needs --{key}")
        if self.subcommand == "postprocess":
            if self.constraint not in CONSTRAINTS:
                raise UsageError(f"--constraint must be one of {', '.join(CONSTRAINTS)}")
            if self.epsilon != "val" and (not isinstance(self.epsilon, float) or self.epsilon < 0):
                raise UsageError("--epsilon must be a non-negative number or 'val'")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _metric_list(text: str) -> list[str]:
    return [m for m in (p.strip() for p in text.split(",")) if m]


def _epsilon(text: str):
    if text == "val":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'val'") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ensaudit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ensaudit {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help="wide prediction CSV")
            sp.add_argument("--manifest", help="run manifest JSON")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threshold", type=float, default=0.5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--metrics", type=_metric_list, default=None, help="comma-separated metric names")
        sp.add_argument("--charts", action="store_true", help="also write SVG charts")
        return sp

    a = common(sub.add_parser("audit", help="fairness and performance of the ensemble and its members"))
    a.add_argument("--weights", choices=("uniform", "dirichlet", "fairness_softmax"), default="uniform")
    a.add_argument("--temperature", type=float, default=0.01)
    a.add_argument("--weight-violation", choices=CONSTRAINTS, default="spd")
    a.add_argument("--bins", type=int, default=DEFAULT_BINS)

    s = common(sub.add_parser("sweep", help="metrics versus ensemble size"))
    s.add_argument("--n-max", type=int, default=None)
    s.add_argument("--orderings", type=int, default=1, help="random orderings per run; 0 keeps the stored order")

    common(sub.add_parser("diversity", help="average predictive diversity per (y, a) cell"))

    c = common(sub.add_parser("calibration", help="ECE and per-group threshold scans"))
    c.add_argument("--bins", type=int, default=DEFAULT_BINS)
    c.add_argument("--grid-step", type=float, default=0.01)

    pp = common(sub.add_parser("postprocess", help="fit group thresholds on one split, apply to another"), data=False)
    pp.add_argument("--fit", help="prediction CSV used to fit the thresholds")
    pp.add_argument("--apply", help="prediction CSV the rule is evaluated on")
    pp.add_argument("--constraint", choices=CONSTRAINTS, default="eod")
    pp.add_argument("--epsilon", type=_epsilon, default=0.05, help="allowed gap, or 'val' for the members' mean gap on the fit split")
    pp.add_argument("--objective", choices=OBJECTIVES, default="accuracy")
    pp.add_argument("--mode", choices=("expected", "sampled"), default="expected")

    sim = common(sub.add_parser("simulate", help="generate synthetic member scores"), data=False)
    sim.add_argument("--config", help="SyntheticConfig as JSON file")
    defaults = SyntheticConfig()
    for name in ("per_cell", "members", "runs"):
        sim.add_argument(f"--{name.replace('_', '-')}", type=int, default=None, help=f"default {getattr(defaults, name)}")
    for name in ("separation", "sigma0", "gap", "alpha", "spread"):
        sim.add_argument(f"--{name}", type=float, default=None, help=f"default {getattr(defaults, name)}")

    cmp_ = common(sub.add_parser("compare", help="ensemble minus average member, with Welch tests across runs"))
    cmp_.add_argument("--reduction", choices=("per_run", "pooled"), default="per_run")
    cmp_.add_argument("--alpha", type=float, default=0.05)
    return p


_CONFIG_KEYS = {"subcommand", "out", "threshold", "seed", "constraint", "epsilon", "metrics", "charts"}
_INPUT_KEYS = {"data", "manifest", "fit", "apply", "config"}


def config_from_args(ns: argparse.Namespace) -> CommandConfig:
    d = vars(ns)
    cfg = CommandConfig(
        subcommand=d["subcommand"],
        inputs={k: d[k] for k in _INPUT_KEYS if k in d},
        out=d["out"],
        threshold=d["threshold"],
        seed=d["seed"],
        constraint=d.get("constraint"),
        epsilon=d.get("epsilon"),
        metrics=d["metrics"] if d["metrics"] is not None else [],
        charts=d["charts"],
        options={k: v for k, v in d.items() if k not in _CONFIG_KEYS | _INPUT_KEYS},
    )
    cfg.options["metrics_given"] = d["metrics"] is not None
    return cfg


def _check_metrics(names, allowed):
    bad = [m for m in names if m not in allowed]
    if bad:
        raise UsageError(f"unknown metrics {bad}; choose from {', '.join(allowed)}")


def _metrics(cfg: CommandConfig, default, allowed=METRICS) -> list[str]:
    names = cfg.metrics if cfg.options.get("metrics_given") else list(default)
    _check_metrics(names, allowed)
    return names


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _member_table(data: LabeledPredictions, threshold: float, metrics: list[str]) -> tuple[list[dict], str]:
    rows = []
    for j, name in enumerate(data.member_names):
        rep = fairness_report(data.scores[:, j], data.labels, data.groups, threshold)
        rows.append({"member": name, **{m: rep.metric(m) for m in metrics}})
    return rows, _csv([[r["member"], *[r[m] for m in metrics]] for r in rows], ["member", *metrics])


def _cmd_audit(cfg: CommandConfig):
    runset = load_runset(cfg.inputs["data"], cfg.inputs.get("manifest"))
    data = runset.data
    metrics = _metrics(cfg, METRICS)
    opts = cfg.options
    fair_v = None
    if opts["weights"] == "fairness_softmax":
        fair_v = [
            violation(fairness_report(data.scores[:, j], data.labels, data.groups, cfg.threshold), opts["weight_violation"])
            for j in range(data.n_members)
        ]
    weights = make_weights(opts["weights"], data.n_members, seed=cfg.seed, fairness_violations=fair_v, temperature=opts["temperature"])
    ens = aggregate(data.scores, weights)
    rep = fairness_report(ens, data.labels, data.groups, cfg.threshold)
    member_rows, member_csv = _member_table(data, cfg.threshold, metrics)
    member_mean = {m: float(np.mean([r[m] for r in member_rows])) for m in metrics}
    cells = diversity_cells(data)
    report = {
        "ensemble": rep.to_dict() if metrics else {},
        "ensemble_metrics": {m: rep.metric(m) for m in metrics},
        "member_mean": member_mean,
        "weights": {"mode": opts["weights"], "values": weights.weights.tolist()},
        "diversity": {"cells": [c.to_dict() for c in cells.values()], "score": diversity_score(cells)},
        "ece": {
            "ensemble": ece_table(ens, data.labels, opts["bins"]).ece,
            "member_mean": float(np.mean([ece_table(data.scores[:, j], data.labels, opts["bins"]).ece for j in range(data.n_members)])),
            "bins": opts["bins"],
        },
    }
    files = {
        "members.csv": member_csv,
        "ensemble.csv": _csv([[m, rep.metric(m)] for m in metrics], ["metric", "value"]),
    }
    return report, files, validate_dataset(data)


def _cmd_sweep(cfg: CommandConfig):
    runset = load_runset(cfg.inputs["data"], cfg.inputs.get("manifest"))
    metrics = _metrics(cfg, ("accuracy", "spd_abs", "eod_abs", "aod"), SWEEP_METRICS)
    opts = cfg.options
    try:
        curves = ensemble_size_sweep(runset, opts["n_max"], opts["orderings"], cfg.threshold, cfg.seed, metrics)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = {
        "curves": {m: {"n": c.sizes, "mean": c.mean, "std": c.std} for m, c in curves.items()},
        "sampling": next(iter(curves.values())).metadata if curves else {},
    }
    files = {"curves.csv": sweep_to_csv(curves) if curves else "metric,n,mean,std\n"}
    for m, c in curves.items():
        files[f"{m}.svg"] = svg_line_chart({m: (c.sizes, c.mean, c.std)}, title=m, xlabel="ensemble size", ylabel=m)
    return report, files, validate_dataset(runset.data)


def _cmd_diversity(cfg: CommandConfig):
    runset = load_runset(cfg.inputs["data"], cfg.inputs.get("manifest"))
    per_run = []
    for r, members in enumerate(runset.runs()):
        sub = runset.data.with_scores(runset.data.scores[:, members], [runset.data.member_names[m] for m in members])
        cells = diversity_cells(sub)
        per_run.append({"run": r, "cells": [c.to_dict() for c in cells.values()], "score": diversity_score(cells)})
    table = []
    for i, c in enumerate(per_run[0]["cells"]):
        vals = [pr["cells"][i]["div"] for pr in per_run]
        table.append([c["y"], c["a"], None if None in vals else float(np.mean(vals)), c["count"]])
    scores = [pr["score"] for pr in per_run]
    report = {"runs": per_run, "diversity_score": float(np.mean(scores)), "reduction": "mean over runs" if runset.n_runs > 1 else "single run"}
    files = {"table.csv": _csv(table, ["y", "a", "div", "count"])}
    return report, files, validate_dataset(runset.data)


def _cmd_calibration(cfg: CommandConfig):
    runset = load_runset(cfg.inputs["data"], cfg.inputs.get("manifest"))
    data = runset.data
    opts = cfg.options
    if opts["bins"] < 1:
        raise UsageError("--bins must be >= 1")
    step = opts["grid_step"]
    if not 0 < step <= 1:
        raise UsageError("--grid-step must lie in (0, 1]")
    n_steps = int(round(1.0 / step))
    grid = np.round(np.linspace(0.0, 1.0, n_steps + 1), 10)
    ens = aggregate(data.scores)
    ens_ece = ece_table(ens, data.labels, opts["bins"])
    scan = threshold_scan(ens, data.labels, data.groups, grid)
    member_ece = [ece_table(data.scores[:, j], data.labels, opts["bins"]).ece for j in range(data.n_members)]
    report = {
        "ece": {"ensemble": ens_ece.ece, "members": member_ece, "member_mean": float(np.mean(member_ece)), "bins": ens_ece.bins},
        "best_threshold": {
            "all": scan.best(None),
            "a0": scan.best(0),
            "a1": scan.best(1),
        },
    }
    files = {
        "scan.csv": _csv(scan.to_rows(), ["threshold", "acc_all", "acc_a0", "acc_a1"]),
        "scan.svg": svg_line_chart(
            {"all": (scan.grid, scan.acc_all, None), "A=0": (scan.grid, scan.acc_a0, None), "A=1": (scan.grid, scan.acc_a1, None)},
            title="accuracy vs threshold",
            xlabel="threshold",
            ylabel="accuracy",
        ),
    }
    return report, files, validate_dataset(data)


def _cmd_postprocess(cfg: CommandConfig):
    fit = load_predictions(cfg.inputs["fit"])
    test = load_predictions(cfg.inputs["apply"])
    if fit.n_members != test.n_members:
        raise IngestionError("fit and apply files have different member counts")
    opts = cfg.options
    eps = cfg.epsilon
    if eps == "val":
        eps = member_average_violation(fit.scores, fit.labels, fit.groups, cfg.constraint, cfg.threshold)
    fit_scores = aggregate(fit.scores)
    test_scores = aggregate(test.scores)
    try:
        rule = fit_group_thresholds(fit_scores, fit.labels, fit.groups, cfg.constraint, eps, opts["objective"])
    except ValueError as exc:
        raise IngestionError(str(exc)) from None
    rows = []
    summary = {}
    for split, d, s in (("fit", fit, fit_scores), ("apply", test, test_scores)):
        before = fairness_report(s, d.labels, d.groups, cfg.threshold)
        if opts["mode"] == "expected":
            after = expected_report(rule, s, d.labels, d.groups)
        else:
            dec = sample_decisions(rule, s, d.groups, cfg.seed)
            after = report_from_confusion(confusion_from_decisions(dec, d.labels, d.groups), float("nan"), auroc(s, d.labels))
        summary[split] = {"before": before.metrics(), "after": after.metrics()}
        for stage, rep in (("Before HPP", before), ("After HPP", after)):
            rows.append([split, stage, rep.accuracy, rep.spd_abs, rep.eod_abs, rep.aod, violation(rep, cfg.constraint)])
    report = {
        "rule": rule.to_dict(),
        "epsilon_used": eps,
        "evaluation_mode": opts["mode"],
        "splits": summary,
        "validation_apply": validate_dataset(test).to_dict(),
    }
    header = ["split", "stage", "accuracy", "spd_abs", "eod_abs", "aod", f"{cfg.constraint}_violation"]
    md = ["| split | stage | Acc | SPD | EOD | AOD |", "|---|---|---|---|---|---|"]
    md += [f"| {r[0]} | {r[1]} | {r[2]:.3f} | {r[3]:.3f} | {r[4]:.3f} | {r[5]:.3f} |" for r in rows]
    files = {
        "rule.json": rule.to_json() + "\n",
        "before_after.csv": _csv(rows, header),
        "before_after.md": "\n".join(md) + "\n",
    }
    return report, files, validate_dataset(fit)


def _cmd_simulate(cfg: CommandConfig):
    opts = cfg.options
    base = {}
    if cfg.inputs.get("config"):
        try:
            base = json.loads(Path(cfg.inputs["config"]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise IngestionError(f"cannot read config: {exc}") from None
    for name in ("per_cell", "members", "runs", "separation", "sigma0", "gap", "alpha", "spread"):
        if opts.get(name) is not None:
            base[name] = opts[name]
    base["seed"] = cfg.seed
    try:
        sc = SyntheticConfig(**base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid synthetic config: {exc}") from None
    runset = generate_synthetic(sc)
    files = {
        "predictions.csv": predictions_to_csv(runset.data),
        "runs.json": manifest_to_json(runset),
    }
    cells = diversity_cells(runset.data)
    report = {
        "synthetic_config": sc.to_dict(),
        "diversity": {"cells": [c.to_dict() for c in cells.values()], "score": diversity_score(cells)},
    }
    return report, files, validate_dataset(runset.data)


def _cmd_compare(cfg: CommandConfig):
    runset = load_runset(cfg.inputs["data"], cfg.inputs.get("manifest"))
    metrics = _metrics(cfg, DEFAULT_DELTA_METRICS)
    opts = cfg.options
    rows = delta_significance_table(runset, cfg.threshold, metrics, opts["reduction"], opts["alpha"])
    report = {"rows": [r.to_dict() for r in rows], "reduction": opts["reduction"], "n_runs": runset.n_runs}
    files = {"delta.csv": delta_rows_to_csv(rows), "delta.md": delta_rows_to_markdown(rows)}
    return report, files, validate_dataset(runset.data)


_COMMANDS = {
    "audit": _cmd_audit,
    "sweep": _cmd_sweep,
    "diversity": _cmd_diversity,
    "calibration": _cmd_calibration,
    "postprocess": _cmd_postprocess,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
}


def run_command(cfg: CommandConfig) -> dict:
    """Run one subcommand and write its files; returns the file manifest."""
    cfg.validate()
    results, files, summary = _COMMANDS[cfg.subcommand](cfg)
    if cfg.options.get("metrics_given") and not cfg.metrics:
        results, files = {}, {}
    effective = asdict(cfg)
    effective["options"] = {k: v for k, v in cfg.options.items() if k != "metrics_given"}
    report = {
        "artifact": {"name": "ensaudit", "version": __version__},
        "config": effective,
        "validation": summary.to_dict(),
        "results": results,
    }
    return emit_report(cfg.subcommand, report, files, cfg.out, cfg.charts)


def _fail(kind: str, code: int, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit": code, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = config_from_args(build_parser().parse_args(argv))
        run_command(cfg)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, str(exc))
    except IngestionError as exc:
        return _fail("ingestion", EXIT_INGEST, str(exc))
    except FileNotFoundError as exc:
        return _fail("ingestion", EXIT_INGEST, str(exc))
    except OSError as exc:
        return _fail("io", EXIT_INTERNAL, str(exc))
    except Exception as exc:  # invariant breach or bug
        return _fail("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
