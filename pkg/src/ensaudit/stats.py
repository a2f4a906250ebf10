"""Welch t-tests, bootstrap intervals and ensemble-minus-member delta tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _parallel
from .data import LabeledPredictions, RunSet
from .ensemble import aggregate, evaluate_scores

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 20000


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def _mean(v: np.ndarray) -> float:
    # equal values give exactly that value, so identical members yield a zero delta
    if v.size and np.all(v == v[0]):
        return float(v[0])
    return math.fsum(v) / v.size



class WelchResult(NamedTuple):
    t: float
    df: float
    p: float
    degenerate: bool = False


def welch_t_test(xs: Sequence[float], ys: Sequence[float]) -> WelchResult:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise ValueError("Welch test needs at least two values per sample")
    mx, my = _mean(x), _mean(y)
    vx = math.fsum((x - mx) ** 2) / (x.size - 1)
    vy = math.fsum((y - my) ** 2) / (y.size - 1)
    sx, sy = vx / x.size, vy / y.size
    se2 = sx + sy
    if se2 == 0.0:
        if mx == my:
            return WelchResult(0.0, math.nan, 1.0, True)
        return WelchResult(math.copysign(math.inf, mx - my), math.nan, 0.0, True)
    t = (mx - my) / math.sqrt(se2)
    df = se2 * se2 / (sx * sx / (x.size - 1) + sy * sy / (y.size - 1))
    return WelchResult(t, df, t_two_sided_p(t, df))


class BootstrapCI(NamedTuple):
    lower: float
    upper: float
    used: int
    skipped: int


def stratified_resample(data: LabeledPredictions, rng: np.random.Generator) -> np.ndarray:
    """Row indices drawn with replacement inside each (y, a) cell."""
    parts = []
    for y in (0, 1):
        for a in (0, 1):
            cell = np.flatnonzero((data.labels == y) & (data.groups == a))
            if cell.size:
                parts.append(rng.choice(cell, size=cell.size, replace=True))
    return np.sort(np.concatenate(parts))


def bootstrap_ci(
    evaluator: Callable[[LabeledPredictions], float],
    data: LabeledPredictions,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapCI:
    """Percentile interval of ``evaluator`` over stratified resamples.

    Resamples where the metric is undefined (NaN) are skipped and counted.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")

    def one(b):
        idx = stratified_resample(data, _parallel.stream(seed, b))
        # resampled rows repeat; give them distinct ids so the container stays valid
        sub = LabeledPredictions(
            tuple(f"{data.sample_ids[i]}#{j}" for j, i in enumerate(idx)),
            data.labels[idx],
            data.groups[idx],
            data.scores[idx],
            data.member_names,
        )
        return float(evaluator(sub))

    vals = np.array(_parallel.ordered_map(one, range(n_boot)))
    good = vals[~np.isnan(vals)]
    if good.size == 0:
        return BootstrapCI(math.nan, math.nan, 0, n_boot)
    lo, hi = np.quantile(good, [(1 - level) / 2, (1 + level) / 2])
    return BootstrapCI(float(lo), float(hi), int(good.size), int(n_boot - good.size))


VIOLATION_METRICS = ("spd_abs", "eod_abs", "aod")
DEFAULT_DELTA_METRICS = ("accuracy", "accuracy_a0", "accuracy_a1", "balanced_accuracy", "auroc", "spd_abs", "eod_abs", "aod")


@dataclass
class DeltaRow:
    metric: str
    member_mean: float
    member_std: float
    ensemble_mean: float
    ensemble_std: float
    delta_mean: float
    delta_std: float
    p_value: float
    significant: bool
    shaded: bool
    n_runs: int
    reduction: str

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}


def _std(v: np.ndarray) -> float:
    if v.size < 2 or np.all(v == v[0]):
        return 0.0
    return float(np.std(v, ddof=1))


def run_metrics(runset: RunSet, threshold: float, metrics: Sequence[str]):
    """Per run: the uniform ensemble's metrics and each member's metrics."""
    data = runset.data
    ens, members = [], []
    for run in runset.runs():
        ens.append(evaluate_scores(data, aggregate(data.scores[:, run]), threshold, metrics))
        members.append([evaluate_scores(data, data.scores[:, m], threshold, metrics) for m in run])
    return ens, members


def delta_significance_table(
    runset: RunSet,
    threshold: float = 0.5,
    metrics: Sequence[str] = DEFAULT_DELTA_METRICS,
    reduction: str = "per_run",
    alpha: float = 0.05,
    shade_level: float = 0.05,
) -> list[DeltaRow]:
    """Ensemble minus average member, per metric, with a Welch test across runs.

    ``per_run`` compares the R ensemble values with the R per-run member
    averages. ``pooled`` compares them with every individual member value.
    """
    if reduction not in ("per_run", "pooled"):
        raise ValueError("reduction must be 'per_run' or 'pooled'")
    ens, members = run_metrics(runset, threshold, metrics)
    rows = []
    for m in metrics:
        e = np.array([r[m] for r in ens])
        per_run = np.array([_mean(np.array([v[m] for v in run])) for run in members])
        pooled = np.array([v[m] for run in members for v in run])
        member_sample = per_run if reduction == "per_run" else pooled
        member_mean = _mean(member_sample)
        ens_mean = _mean(e)
        if e.size >= 2 and member_sample.size >= 2:
            p = welch_t_test(e, member_sample).p
        else:
            p = math.nan
        rows.append(
            DeltaRow(
                metric=m,
                member_mean=member_mean,
                member_std=_std(member_sample),
                ensemble_mean=ens_mean,
                ensemble_std=_std(e),
                delta_mean=ens_mean - member_mean,
                delta_std=_std(e - per_run),
                p_value=p,
                significant=bool(p < alpha),
                shaded=m in VIOLATION_METRICS and member_mean > shade_level and ens_mean > shade_level,
                n_runs=int(e.size),
                reduction=reduction,
            )
        )
    return rows


def delta_rows_to_csv(rows: Sequence[DeltaRow]) -> str:
    buf = io.StringIO()
    fields = list(DeltaRow.__dataclass_fields__)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        d = r.to_dict()
        w.writerow(["" if d[f] is None else (repr(d[f]) if isinstance(d[f], float) else d[f]) for f in fields])
    return buf.getvalue()


def _short(x: float) -> str:
    if math.isnan(x):
        return "n/a"
    text = f"{x:.3f}"
    return text.replace("0.", ".", 1) if text.startswith(("0.", "-0.")) else text


def delta_rows_to_markdown(rows: Sequence[DeltaRow], title: str = "") -> str:
    """Members / ensemble / delta columns; significant deltas in bold, shaded rows marked."""
    lines = []
    if title:
        lines.append(f"**{title}**\n")
    lines.append("| Metric | Members | Deep Ensemble | Δ | p | shaded |")
    lines.append("|---|---|---|---|---|---|")
    for r in rows:
        delta = f"{_short(r.delta_mean)} ± {_short(r.delta_std)}"
        if r.significant:
            delta = f"**{delta}**"
        lines.append(
            f"| {r.metric} | {_short(r.member_mean)} ± {_short(r.member_std)} "
            f"| {_short(r.ensemble_mean)} ± {_short(r.ensemble_std)} | {delta} "
            f"| {'n/a' if math.isnan(r.p_value) else f'{r.p_value:.3g}'} | {'x' if r.shaded else ''} |"
        )
    return "\n".join(lines) + "\n"
