"""Group-dependent randomized thresholds under a relaxed fairness constraint.

Each group's achievable (FPR, TPR) points form the region under the upper
convex hull of its ROC curve. The fitted rule places both groups on their
hulls, maximizes expected accuracy (or balanced accuracy) and keeps the
chosen fairness gap within ``epsilon``. A point between two hull vertices is
realized by randomizing between the two vertex thresholds.

The search is exact. Within one pair of hull edges the objective is linear
and the feasible set is a convex polygon, so some polygon vertex is
optimal. Every such vertex either puts one group on a hull vertex or sits on
a corner of the AOD diamond. The code enumerates those candidates and, for
each one, solves for the other group's best feasible point edge by edge.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .metrics import (
    FairnessReport,
    GroupConfusion,
    auroc,
    confusion_by_group,
    fairness_report,
    report_from_confusion,
)

CONSTRAINTS = ("spd", "eod", "aod")
OBJECTIVES = ("accuracy", "balanced_accuracy")
FEASIBILITY_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class RocHull:
    """Upper convex hull of an ROC curve, from (0, 0) to (1, 1).

    ``fp``/``tp`` are the integer counts behind each vertex, so hull tests
    are exact. ``thresholds[i]`` realizes vertex i under the ``score > t`` rule.
    """

    fp: np.ndarray
    tp: np.ndarray
    thresholds: np.ndarray
    n_neg: int
    n_pos: int

    @property
    def fpr(self) -> np.ndarray:
        return self.fp / self.n_neg

    @property
    def tpr(self) -> np.ndarray:
        return self.tp / self.n_pos

    def __len__(self) -> int:
        return self.fp.size

    def area(self) -> float:
        f, t = self.fpr, self.tpr
        return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2.0))


def roc_points(scores, labels):
    """Every deterministic operating point: (fp, tp, thresholds), from all-negative to all-positive."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) == 1
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC hull needs both positive and negative labels")
    values = np.unique(s)[::-1]  # descending
    # number of samples with score >= v, for each distinct v
    idx = s.size - np.searchsorted(np.sort(s), values, side="left")
    order = np.argsort(-s, kind="mergesort")
    cum_tp = np.concatenate([[0], np.cumsum(y[order])])
    tp = cum_tp[idx]
    fp = idx - tp
    lower = np.append(values[1:], np.nan)
    thr = np.empty(values.size)
    for i, (v, lo) in enumerate(zip(values, lower)):
        if math.isnan(lo):
            thr[i] = min(-1.0, v - 1.0)
        else:
            mid = lo + (v - lo) / 2.0
            thr[i] = mid if lo <= mid < v else lo
    top = max(2.0, values[0] + 1.0)
    return (
        np.concatenate([[0], fp]).astype(np.int64),
        np.concatenate([[0], tp]).astype(np.int64),
        np.concatenate([[top], thr]),
        n_neg,
        n_pos,
    )


def build_roc_hull(scores, labels) -> RocHull:
    fp, tp, thr, n_neg, n_pos = roc_points(scores, labels)
    hull: list[int] = []
    for i in range(fp.size):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            # integer cross product in count space has the sign of the one in rate space;
            # drop left turns and collinear points
            cross = (fp[a] - fp[o]) * (tp[i] - tp[o]) - (tp[a] - tp[o]) * (fp[i] - fp[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    h = np.array(hull)
    return RocHull(fp[h], tp[h], thr[h], n_neg, n_pos)


@dataclass(frozen=True)
class GroupRule:
    threshold: float
    alt_threshold: float
    mix: float  # probability of using `threshold`
    fpr: float
    tpr: float


@dataclass(frozen=True)
class GroupDecisionRule:
    constraint: str
    epsilon: float
    objective: str
    group0: GroupRule
    group1: GroupRule
    fit_gap: float
    fit_objective: float
    prevalence: tuple[float, float]

    def __getitem__(self, a: int) -> GroupRule:
        return (self.group0, self.group1)[a]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prevalence"] = list(self.prevalence)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "GroupDecisionRule":
        return cls(
            constraint=d["constraint"],
            epsilon=float(d["epsilon"]),
            objective=d["objective"],
            group0=GroupRule(**d["group0"]),
            group1=GroupRule(**d["group1"]),
            fit_gap=float(d["fit_gap"]),
            fit_objective=float(d["fit_objective"]),
            prevalence=tuple(d["prevalence"]),
        )


def objective_weights(labels, groups, objective: str) -> tuple[np.ndarray, np.ndarray, float]:
    """Coefficients (c_tpr[a], c_fpr[a], const) with objective = const + sum_a c_tpr*TPR_a - c_fpr*FPR_a."""
    y = np.asarray(labels) == 1
    a = np.asarray(groups)
    pos = np.array([np.sum(y & (a == g)) for g in (0, 1)], dtype=float)
    neg = np.array([np.sum(~y & (a == g)) for g in (0, 1)], dtype=float)
    if objective == "accuracy":
        k = y.size
        return pos / k, neg / k, float(neg.sum() / k)
    if objective == "balanced_accuracy":
        return 0.5 * pos / pos.sum(), 0.5 * neg / neg.sum(), 0.5
    raise ValueError(f"unknown objective {objective!r}")


def _gap_terms(constraint: str, prev: np.ndarray):
    """Constraint as sum_i w_i |<row_i(a=1), p1> - <row_i(a=0), p0>| with p = (fpr, tpr)."""
    if constraint == "spd":
        return [(1.0, np.array([1 - prev[0], prev[0]]), np.array([1 - prev[1], prev[1]]))]
    if constraint == "eod":
        return [(1.0, np.array([0.0, 1.0]), np.array([0.0, 1.0]))]
    if constraint == "aod":
        return [
            (0.5, np.array([0.0, 1.0]), np.array([0.0, 1.0])),
            (0.5, np.array([1.0, 0.0]), np.array([1.0, 0.0])),
        ]
    raise ValueError(f"unknown constraint {constraint!r}")


def _gap(terms, p0, p1) -> float:
    return sum(w * abs(r1 @ p1 - r0 @ p0) for w, r0, r1 in terms)


class _Group:
    def __init__(self, hull: RocHull, c_tpr: float, c_fpr: float):
        self.hull = hull
        self.v = np.column_stack([hull.fpr, hull.tpr])  # vertices, (F, T)
        self.start = self.v[:-1]
        self.delta = self.v[1:] - self.v[:-1]
        self.coef = np.array([-c_fpr, c_tpr])
        self.val = self.v @ self.coef

    @property
    def n_edges(self) -> int:
        return self.delta.shape[0]

    def point(self, edge: int, u: float) -> np.ndarray:
        return self.start[edge] + u * self.delta[edge]

    def vertex_params(self):
        e = self.n_edges
        return [(min(i, e - 1), 0.0 if i < e else 1.0) for i in range(e + 1)]


def _best_partner(other: _Group, terms_other, fixed_vals: list[float], eps: float):
    """Best feasible point on ``other``'s hull when the fixed group's linear forms take ``fixed_vals``.

    Returns (edge, u, value) or None when no point on the hull is feasible.
    """
    e = other.n_edges
    alphas = np.stack([other.start @ r - c for (_, r), c in zip(terms_other, fixed_vals)], axis=1)
    betas = np.stack([other.delta @ r for (_, r) in terms_other], axis=1)
    weights = np.array([w for w, _ in terms_other])
    with np.errstate(divide="ignore", invalid="ignore"):
        kinks = np.where(betas != 0, -alphas / betas, 0.0)
    pts = np.sort(np.column_stack([np.zeros(e), np.ones(e), np.clip(kinks, 0.0, 1.0)]), axis=1)
    g = np.abs(alphas[:, None, :] + betas[:, None, :] * pts[:, :, None]) @ weights
    # absorb rounding at exact kinks, which matters when eps == 0
    eps = eps + FEASIBILITY_SLACK
    ok = g <= eps
    feasible = ok.any(axis=1)
    if not feasible.any():
        return None
    m = pts.shape[1]
    first = np.argmax(ok, axis=1)
    last = m - 1 - np.argmax(ok[:, ::-1], axis=1)
    rows = np.arange(e)

    def crossing(i_out, i_in):
        p_out, p_in = pts[rows, i_out], pts[rows, i_in]
        g_out, g_in = g[rows, i_out], g[rows, i_in]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(g_out > g_in, (g_out - eps) / (g_out - g_in), 0.0)
        return p_out + np.clip(frac, 0.0, 1.0) * (p_in - p_out)

    u_lo = np.where(first > 0, crossing(np.maximum(first - 1, 0), first), pts[rows, first])
    u_hi = np.where(last < m - 1, crossing(np.minimum(last + 1, m - 1), last), pts[rows, last])
    slope = other.val[1:] - other.val[:-1]
    u = np.where(slope > 0, u_hi, u_lo)
    value = other.val[:-1] + u * slope
    value = np.where(feasible, value, -np.inf)
    j = int(np.argmax(value))
    return j, float(u[j]), float(value[j])


def _aod_corners(g0: _Group, g1: _Group, eps: float):
    """Edge-pair points where one AOD term vanishes and the other uses the whole budget."""
    out = []
    e0, e1 = g0.n_edges, g1.n_edges
    s0, d0 = g0.start[:, None, :], g0.delta[:, None, :]
    s1, d1 = g1.start[None, :, :], g1.delta[None, :, :]
    for zero_axis in (0, 1):
        full_axis = 1 - zero_axis
        for sign in (1.0, -1.0):
            # zero_axis coords equal, full_axis coords differ (group0 - group1) by 2*eps*sign
            a11, a12 = d0[..., zero_axis], -d1[..., zero_axis]
            a21, a22 = d0[..., full_axis], -d1[..., full_axis]
            b1 = s1[..., zero_axis] - s0[..., zero_axis]
            b2 = s1[..., full_axis] - s0[..., full_axis] + 2 * eps * sign
            a11, a12, a21, a22, b1, b2 = np.broadcast_arrays(a11, a12, a21, a22, b1, b2)
            det = a11 * a22 - a12 * a21
            with np.errstate(divide="ignore", invalid="ignore"):
                u0 = (b1 * a22 - a12 * b2) / det
                u1 = (a11 * b2 - b1 * a21) / det
            good = (np.abs(det) > 1e-15) & (u0 >= 0) & (u0 <= 1) & (u1 >= 0) & (u1 <= 1)
            for i, j in zip(*np.nonzero(good)):
                out.append(((int(i), float(u0[i, j])), (int(j), float(u1[i, j]))))
            if eps == 0:
                break
    return out


def _realize(g: _Group, edge: int, u: float) -> GroupRule:
    thr = g.hull.thresholds
    f, t = g.point(edge, u)
    if u <= 0.0:
        return GroupRule(float(thr[edge]), float(thr[edge]), 1.0, float(f), float(t))
    if u >= 1.0:
        return GroupRule(float(thr[edge + 1]), float(thr[edge + 1]), 1.0, float(f), float(t))
    return GroupRule(float(thr[edge]), float(thr[edge + 1]), float(1.0 - u), float(f), float(t))


def fit_group_thresholds(
    scores,
    labels,
    groups,
    constraint: str = "eod",
    epsilon: float = 0.0,
    objective: str = "accuracy",
) -> GroupDecisionRule:
    if constraint not in CONSTRAINTS:
        raise ValueError(f"constraint must be one of {CONSTRAINTS}")
    if not epsilon >= 0:
        raise ValueError("epsilon must be >= 0")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    a = np.asarray(groups)
    for g in (0, 1):
        cls = set(np.unique(y[a == g]).tolist())
        if cls != {0, 1}:
            raise ValueError(f"group {g} needs both classes in the fit data")
    prev = np.array([float(np.mean(y[a == g])) for g in (0, 1)])
    c_tpr, c_fpr, const = objective_weights(y, a, objective)
    grp = [
        _Group(build_roc_hull(s[a == g], y[a == g]), c_tpr[g], c_fpr[g]) for g in (0, 1)
    ]
    terms = _gap_terms(constraint, prev)
    rows = [[r0 for _, r0, _ in terms], [r1 for _, _, r1 in terms]]

    def partner(fixed: int, p_fixed: np.ndarray):
        other = 1 - fixed
        vals = [r @ p_fixed for r in rows[fixed]]
        return _best_partner(grp[other], [(w, r) for (w, *_), r in zip(terms, rows[other])], vals, epsilon)

    candidates = []  # (value, gap, ((edge0, u0), (edge1, u1)))

    def consider(fixed: int, edge: int, u: float):
        p = grp[fixed].point(edge, u)
        res = partner(fixed, p)
        if res is None:
            return
        j, v, val = res
        pair = [None, None]
        pair[fixed] = (edge, u)
        pair[1 - fixed] = (j, v)
        p0 = grp[0].point(*pair[0])
        p1 = grp[1].point(*pair[1])
        total = const + grp[0].coef @ p0 + grp[1].coef @ p1
        candidates.append((float(total), _gap(terms, p0, p1), tuple(pair)))

    for fixed in (0, 1):
        for edge, u in grp[fixed].vertex_params():
            consider(fixed, edge, u)
    if constraint == "aod":
        for c0, _ in _aod_corners(grp[0], grp[1], epsilon):
            consider(0, *c0)

    if not candidates:
        raise RuntimeError("no feasible operating point found; the all-negative point should always be feasible")
    best = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= best - 1e-12]
    value, gap, (q0, q1) = min(tied, key=lambda c: c[1])
    return GroupDecisionRule(
        constraint=constraint,
        epsilon=float(epsilon),
        objective=objective,
        group0=_realize(grp[0], *q0),
        group1=_realize(grp[1], *q1),
        fit_gap=float(gap),
        fit_objective=float(value),
        prevalence=(float(prev[0]), float(prev[1])),
    )


def expected_confusion(rule: GroupDecisionRule, scores, labels, groups) -> GroupConfusion:
    """Confusion counts averaged over the rule's randomization (fractional counts)."""
    parts = []
    for g in (0, 1):
        r = rule[g]
        c = confusion_by_group(scores, labels, groups, r.threshold)[g]
        if r.mix < 1.0:
            c_alt = confusion_by_group(scores, labels, groups, r.alt_threshold)[g]
            c = c.scaled(r.mix) + c_alt.scaled(1.0 - r.mix)
        parts.append(c)
    return GroupConfusion(*parts)


def expected_report(rule: GroupDecisionRule, scores, labels, groups) -> FairnessReport:
    return report_from_confusion(expected_confusion(rule, scores, labels, groups), math.nan, auroc(scores, labels))


def sample_decisions(rule: GroupDecisionRule, scores, groups, seed: int) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    a = np.asarray(groups)
    mix = np.where(a == 1, rule.group1.mix, rule.group0.mix)
    t = np.where(a == 1, rule.group1.threshold, rule.group0.threshold)
    t_alt = np.where(a == 1, rule.group1.alt_threshold, rule.group0.alt_threshold)
    use_first = np.random.default_rng(seed).random(s.size) < mix
    return s > np.where(use_first, t, t_alt)


def apply_decision_rule(rule: GroupDecisionRule, scores, groups, mode: str = "expected", labels=None, seed: int | None = None):
    """``sampled`` returns per-sample decisions; ``expected`` returns the expected GroupConfusion."""
    if mode == "sampled":
        if seed is None:
            raise ValueError("sampled mode needs a seed")
        return sample_decisions(rule, scores, groups, seed)
    if mode == "expected":
        if labels is None:
            raise ValueError("expected mode needs labels")
        return expected_confusion(rule, scores, labels, groups)
    raise ValueError(f"unknown mode {mode!r}")


def violation(report: FairnessReport, constraint: str) -> float:
    return {"spd": report.spd_abs, "eod": report.eod_abs, "aod": report.aod}[constraint]


def member_average_violation(member_scores, labels, groups, constraint: str, threshold: float = 0.5) -> float:
    """Mean fairness violation of the individual members (columns of ``member_scores``)."""
    m = np.asarray(member_scores, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    vals = [violation(fairness_report(m[:, j], labels, groups, threshold), constraint) for j in range(m.shape[1])]
    return float(np.mean(vals))
