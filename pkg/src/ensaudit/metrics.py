"""Per-group confusion counts, group-fairness gaps and performance metrics.

Decision rule: a sample is predicted positive iff ``score > t``.  A score
exactly equal to the threshold is predicted negative.  Rates whose
denominator is zero come back as NaN and are listed in ``undefined``; they
never raise, so sweeps over many subsets keep going.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

RATE_NAMES = ("pr", "tpr", "fpr", "tnr", "fnr")


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


@dataclass(frozen=True)
class Counts:
    tp: float
    fp: float
    tn: float
    fn: float

    @property
    def size(self) -> float:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def pr(self) -> float:
        return _ratio(self.tp + self.fp, self.size)

    @property
    def tpr(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def fnr(self) -> float:
        return _ratio(self.fn, self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def tnr(self) -> float:
        return _ratio(self.tn, self.fp + self.tn)

    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.size)

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    def scaled(self, w: float) -> "Counts":
        return Counts(w * self.tp, w * self.fp, w * self.tn, w * self.fn)


@dataclass(frozen=True)
class GroupConfusion:
    """Confusion counts for group 0 and group 1.

    Counts are integers for deterministic decisions and may be fractional
    when they are expectations under a randomized rule.
    """

    group0: Counts
    group1: Counts

    def __getitem__(self, a: int) -> Counts:
        if a == 0:
            return self.group0
        if a == 1:
            return self.group1
        raise KeyError(a)

    @property
    def overall(self) -> Counts:
        return self.group0 + self.group1

    def rate(self, name: str, a: int) -> float:
        return getattr(self[a], name)

    @property
    def undefined(self) -> list[str]:
        return [f"{r}_a{a}" for a in (0, 1) for r in RATE_NAMES if math.isnan(self.rate(r, a))]


def _as_arrays(scores, labels, groups):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    a = np.asarray(groups)
    if not (s.shape == y.shape == a.shape) or s.ndim != 1:
        raise ValueError("scores, labels and groups must be aligned 1-d sequences")
    return s, y, a


def counts_from_decisions(decisions, labels, mask=None) -> Counts:
    d = np.asarray(decisions, dtype=bool)
    y = np.asarray(labels) == 1
    if mask is not None:
        d, y = d[mask], y[mask]
    return Counts(
        tp=int(np.sum(d & y)),
        fp=int(np.sum(d & ~y)),
        tn=int(np.sum(~d & ~y)),
        fn=int(np.sum(~d & y)),
    )


def confusion_from_decisions(decisions, labels, groups) -> GroupConfusion:
    a = np.asarray(groups)
    return GroupConfusion(
        counts_from_decisions(decisions, labels, a == 0),
        counts_from_decisions(decisions, labels, a == 1),
    )


def confusion_by_group(scores, labels, groups, threshold: float) -> GroupConfusion:
    s, y, a = _as_arrays(scores, labels, groups)
    return confusion_from_decisions(s > threshold, y, a)


@dataclass(frozen=True)
class Gaps:
    spd_signed: float
    eod_signed: float
    aod: float

    @property
    def spd_abs(self) -> float:
        return abs(self.spd_signed)

    @property
    def eod_abs(self) -> float:
        return abs(self.eod_signed)


def fairness_gaps(confusion: GroupConfusion) -> Gaps:
    """Signed SPD and EOD (group 1 minus group 0) and the non-negative AOD.

    NaN propagates: a gap is undefined whenever one of its rates is.
    """
    c0, c1 = confusion.group0, confusion.group1
    d_tpr = c1.tpr - c0.tpr
    d_fpr = c1.fpr - c0.fpr
    return Gaps(
        spd_signed=c1.pr - c0.pr,
        eod_signed=d_tpr,
        aod=0.5 * abs(d_tpr) + 0.5 * abs(d_fpr),
    )


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied positive/negative pairs count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) == 1
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    # average 1-based ranks over runs of equal scores
    _, first, counts = np.unique(s_sorted, return_index=True, return_counts=True)
    avg = first + (counts + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(avg, counts)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class Performance:
    accuracy: float
    balanced_accuracy: float
    auroc: float
    accuracy_a0: float
    accuracy_a1: float


def performance_from_confusion(confusion: GroupConfusion, auc: float = math.nan) -> Performance:
    total = confusion.overall
    return Performance(
        accuracy=total.accuracy,
        balanced_accuracy=0.5 * (total.tpr + total.tnr),
        auroc=auc,
        accuracy_a0=confusion.group0.accuracy,
        accuracy_a1=confusion.group1.accuracy,
    )


def performance_metrics(scores, labels, groups, threshold: float) -> Performance:
    s, y, a = _as_arrays(scores, labels, groups)
    return performance_from_confusion(confusion_by_group(s, y, a, threshold), auroc(s, y))


# Flat metric names understood by sweeps, delta tables and the CLI.
METRICS = (
    "accuracy",
    "balanced_accuracy",
    "auroc",
    "spd_signed",
    "spd_abs",
    "eod_signed",
    "eod_abs",
    "aod",
    "accuracy_a0",
    "accuracy_a1",
    "pr_a0",
    "pr_a1",
    "tpr_a0",
    "tpr_a1",
    "fpr_a0",
    "fpr_a1",
)


@dataclass
class FairnessReport:
    threshold: float
    counts: dict[str, dict[str, float]]
    rates: dict[str, float]
    spd_signed: float
    eod_signed: float
    spd_abs: float
    eod_abs: float
    aod: float
    accuracy: float
    balanced_accuracy: float
    auroc: float
    accuracy_a0: float
    accuracy_a1: float
    undefined: list[str] = field(default_factory=list)

    def metric(self, name: str) -> float:
        if name in self.rates:
            return self.rates[name]
        return float(getattr(self, name))

    def metrics(self, names=METRICS) -> dict[str, float]:
        return {n: self.metric(n) for n in names}

    def to_dict(self) -> dict:
        # NaN is not valid JSON; undefined values become null and stay listed in `undefined`
        def clean(v):
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, float) and math.isnan(v):
                return None
            return v

        return clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "FairnessReport":
        def restore(v):
            if isinstance(v, dict):
                return {k: restore(x) for k, x in v.items()}
            return math.nan if v is None else v

        return cls(**{k: (v if k == "undefined" else restore(v)) for k, v in doc.items()})

    @classmethod
    def from_json(cls, text: str) -> "FairnessReport":
        return cls.from_dict(json.loads(text))


def report_from_confusion(confusion: GroupConfusion, threshold: float, auc: float = math.nan) -> FairnessReport:
    gaps = fairness_gaps(confusion)
    perf = performance_from_confusion(confusion, auc)
    rates = {f"{r}_a{a}": confusion.rate(r, a) for a in (0, 1) for r in RATE_NAMES}
    counts = {
        f"a{a}": {k: float(v) for k, v in asdict(confusion[a]).items()} for a in (0, 1)
    }
    values = {
        "spd_signed": gaps.spd_signed,
        "eod_signed": gaps.eod_signed,
        "spd_abs": gaps.spd_abs,
        "eod_abs": gaps.eod_abs,
        "aod": gaps.aod,
        **asdict(perf),
    }
    undefined = confusion.undefined + [k for k, v in values.items() if math.isnan(v)]
    return FairnessReport(
        threshold=float(threshold),
        counts=counts,
        rates=rates,
        undefined=undefined,
        **{k: float(v) for k, v in values.items()},
    )


def fairness_report(scores, labels, groups, threshold: float = 0.5) -> FairnessReport:
    """Confusion, gaps and performance for one aggregated score vector."""
    s, y, a = _as_arrays(scores, labels, groups)
    return report_from_confusion(confusion_by_group(s, y, a, threshold), threshold, auroc(s, y))
