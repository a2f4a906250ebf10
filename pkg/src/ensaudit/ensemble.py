"""Score aggregation, member weightings and ensemble-size sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _parallel
from .data import LabeledPredictions, RunSet, select_members
from .diversity import average_div
from .metrics import METRICS, fairness_report


@dataclass(frozen=True, eq=False)
class EnsembleWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-d sequence")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {math.fsum(w)!r}")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size


def aggregate(scores: np.ndarray, weights: EnsembleWeights | None = None) -> np.ndarray:
    """Weighted average of member probabilities; uniform when ``weights`` is None."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if weights is None:
        out = s.mean(axis=1)
    else:
        if len(weights) != s.shape[1]:
            raise ValueError(f"got {len(weights)} weights for {s.shape[1]} members")
        out = s @ weights.weights
    # a convex combination never leaves the member range; clip only rounding drift
    return np.clip(out, s.min(axis=1), s.max(axis=1))


def _normalize(w: np.ndarray) -> np.ndarray:
    w = w / math.fsum(w)
    # push the rounding residue into the largest entry so the sum is 1 to the last ulp
    w[np.argmax(w)] += 1.0 - math.fsum(w)
    return w


def make_weights(
    mode: str,
    n: int,
    seed: int | None = None,
    fairness_violations: Sequence[float] | None = None,
    temperature: float | None = None,
) -> EnsembleWeights:
    if n < 1:
        raise ValueError("need at least one member")
    if mode == "uniform":
        return EnsembleWeights(np.full(n, 1.0 / n))
    if mode == "dirichlet":
        if seed is None:
            raise ValueError("dirichlet weights need a seed")
        g = np.random.default_rng(seed).standard_gamma(1.0, size=n)
        return EnsembleWeights(_normalize(g))
    if mode == "fairness_softmax":
        if fairness_violations is None or temperature is None:
            raise ValueError("fairness_softmax needs fairness_violations and temperature")
        f = np.asarray(fairness_violations, dtype=np.float64)
        if f.shape != (n,):
            raise ValueError(f"expected {n} fairness violations, got {f.shape}")
        if np.any(f < 0) or np.any(f > 1):
            raise ValueError("fairness violations must lie in [0, 1]")
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        z = -f / temperature
        e = np.exp(z - z.max())
        return EnsembleWeights(_normalize(e))
    raise ValueError(f"unknown weighting mode {mode!r}")


def evaluate_scores(
    data: LabeledPredictions, scores: np.ndarray, threshold: float, metrics: Sequence[str]
) -> dict[str, float]:
    report = fairness_report(scores, data.labels, data.groups, threshold)
    return {m: report.metric(m) for m in metrics}


def _prefix_metrics(data, members, threshold, metrics):
    sub = select_members(data, members)
    scores = aggregate(sub.scores)
    out = evaluate_scores(data, scores, threshold, [m for m in metrics if not m.startswith("div")])
    for m in metrics:
        if m == "div":
            out[m] = average_div(sub).value
        elif m.startswith("div_"):
            # div_y1_a0 style: diversity restricted to one (y, a) cell
            y, a = (int(part[1:]) for part in m[4:].split("_"))
            out[m] = average_div(sub, y, a).value
    return out


SWEEP_METRICS = METRICS + ("div", "div_y0_a0", "div_y0_a1", "div_y1_a0", "div_y1_a1")


@dataclass
class SweepCurve:
    metric: str
    sizes: list[int]
    mean: list[float]
    std: list[float]
    metadata: dict = field(default_factory=dict)


def ensemble_size_sweep(
    runset: RunSet,
    n_max: int | None = None,
    orderings: int = 1,
    threshold: float = 0.5,
    seed: int = 0,
    metrics: Sequence[str] = ("accuracy", "spd_abs", "eod_abs", "aod"),
) -> dict[str, SweepCurve]:
    """Metrics of uniform prefix ensembles of size 1..n_max, reduced over runs x orderings.

    Each (run, ordering) pair draws one random permutation of the run's
    members from its own stream, and every prefix of that permutation is
    evaluated, so the curves describe members being added one at a time.
    ``orderings=0`` keeps the stored member order (one deterministic ordering).
    """
    for m in metrics:
        if m not in SWEEP_METRICS:
            raise ValueError(f"unknown metric {m!r}")
    runs = runset.runs()
    smallest = min(len(r) for r in runs)
    n_max = smallest if n_max is None else n_max
    if not 1 <= n_max <= smallest:
        raise ValueError(f"n_max={n_max} must lie in [1, {smallest}] (smallest run)")
    if orderings < 0:
        raise ValueError("orderings must be >= 0")
    fixed_order = orderings == 0
    n_order = max(orderings, 1)

    def task(key):
        r, o = key
        members = list(runs[r])
        if not fixed_order:
            perm = _parallel.stream(seed, r, o).permutation(len(members))
            members = [members[i] for i in perm]
        return [_prefix_metrics(runset.data, members[:n], threshold, metrics) for n in range(1, n_max + 1)]

    keys = [(r, o) for r in range(len(runs)) for o in range(n_order)]
    results = _parallel.ordered_map(task, keys)

    meta = {
        "threshold": threshold,
        "orderings": orderings,
        "sampling": "stored member order" if fixed_order else "random prefix-of-permutation per run",
        "runs": len(runs),
        "seed": seed,
        "n_max": n_max,
    }
    curves = {}
    for m in metrics:
        vals = np.array([[res[i][m] for i in range(n_max)] for res in results])
        stats = [_mean_std(vals[:, i]) for i in range(n_max)]
        curves[m] = SweepCurve(
            metric=m,
            sizes=list(range(1, n_max + 1)),
            mean=[mu for mu, _ in stats],
            std=[sd for _, sd in stats],
            metadata=dict(meta),
        )
    return curves


def _mean_std(col: np.ndarray) -> tuple[float, float]:
    # equal values must give their own value and std 0, which np.mean does not guarantee
    if np.all(col == col[0]):
        return float(col[0]), 0.0
    return float(col.mean()), float(col.std())


def sweep_to_csv(curves: dict[str, SweepCurve]) -> str:
    """Long-format CSV with a leading ``# {json metadata}`` line."""
    buf = io.StringIO()
    meta = next(iter(curves.values())).metadata if curves else {}
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "n", "mean", "std"])
    for name, c in curves.items():
        for n, mu, sd in zip(c.sizes, c.mean, c.std):
            w.writerow([name, n, repr(mu), repr(sd)])
    return buf.getvalue()


def sweep_from_csv(text: str) -> dict[str, SweepCurve]:
    lines = text.splitlines()
    meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    body = lines[1:] if meta or (lines and lines[0].startswith("#")) else lines
    curves: dict[str, SweepCurve] = {}
    for row in csv.DictReader(body):
        c = curves.setdefault(row["metric"], SweepCurve(row["metric"], [], [], [], dict(meta)))
        c.sizes.append(int(row["n"]))
        c.mean.append(float(row["mean"]))
        c.std.append(float(row["std"]))
    return curves


def weighting_cloud(
    data: LabeledPredictions,
    n_weightings: int,
    seed: int,
    threshold: float = 0.5,
    performance: str = "accuracy",
    violation: str = "spd_abs",
) -> list[dict]:
    """Evaluate Dirichlet(1, ..., 1) weightings; returns one (performance, violation) point each.

    Only the point cloud is produced. Picking a weighting from it is left to
    the caller.
    """
    points = []
    for i in range(n_weightings):
        sub_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        w = make_weights("dirichlet", data.n_members, seed=sub_seed)
        vals = evaluate_scores(data, aggregate(data.scores, w), threshold, [performance, violation])
        points.append({"index": i, performance: vals[performance], violation: vals[violation], "weights": w.weights.tolist()})
    return points
