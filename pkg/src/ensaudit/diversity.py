"""Average predictive diversity: ensemble log-likelihood minus mean member log-likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledPredictions

CLAMP = 1e-12


def label_likelihoods(data: LabeledPredictions) -> np.ndarray:
    """K x N matrix of p_n(y_k | x_k), clamped away from 0 and 1."""
    p = np.where(data.labels[:, None] == 1, data.scores, 1.0 - data.scores)
    return np.clip(p, CLAMP, 1.0 - CLAMP)


def _per_sample_div(p: np.ndarray) -> np.ndarray:
    return np.log(p.mean(axis=1)) - np.log(p).mean(axis=1)


@dataclass(frozen=True)
class DiversityCell:
    y: int | None
    a: int | None
    value: float
    count: int

    @property
    def defined(self) -> bool:
        return self.count > 0

    def to_dict(self) -> dict:
        return {
            "y": "all" if self.y is None else self.y,
            "a": "all" if self.a is None else self.a,
            "div": self.value if self.defined else None,
            "count": self.count,
        }


def average_div(data: LabeledPredictions, y: int | None = None, a: int | None = None) -> DiversityCell:
    """Mean Jensen gap over the samples with label ``y`` and group ``a`` (None = any)."""
    mask = np.ones(data.n_samples, dtype=bool)
    if y is not None:
        mask &= data.labels == y
    if a is not None:
        mask &= data.groups == a
    count = int(mask.sum())
    if count == 0:
        return DiversityCell(y, a, math.nan, 0)
    p = label_likelihoods(data)[mask]
    return DiversityCell(y, a, float(_per_sample_div(p).mean()), count)


def diversity_cells(data: LabeledPredictions) -> dict[tuple[int, int], DiversityCell]:
    return {(t, g): average_div(data, t, g) for t in (0, 1) for g in (0, 1)}


def diversity_score(cells: dict[tuple[int, int], DiversityCell]) -> float:
    """Sum over targets of the absolute between-group diversity difference; NaN if a cell is empty."""
    if any(not cells[(t, g)].defined for t in (0, 1) for g in (0, 1)):
        return math.nan
    return abs(cells[(1, 1)].value - cells[(1, 0)].value) + abs(cells[(0, 1)].value - cells[(0, 0)].value)


def jensen_sides(data: LabeledPredictions) -> tuple[float, float]:
    """(K * average diversity, log-likelihood ratio) computed along separate paths.

    The left side sums per-sample gaps. The right side uses whole-dataset
    log-likelihoods: the ensemble's via log-sum-exp over members, each
    member's as a column total, then the member average.
    """
    p = label_likelihoods(data)
    k, n = p.shape
    lhs = math.fsum(_per_sample_div(p))

    logp = np.log(p)
    top = logp.max(axis=1)
    ens_ll = math.fsum(top + np.log(np.exp(logp - top[:, None]).sum(axis=1)) - math.log(n))
    member_ll = [math.fsum(logp[:, j]) for j in range(n)]
    rhs = ens_ll - math.fsum(member_ll) / n
    return lhs, rhs


def check_jensen_identity(data: LabeledPredictions) -> float:
    lhs, rhs = jensen_sides(data)
    return abs(lhs - rhs)


def jensen_tolerance(lhs: float) -> float:
    return 1e-9 * max(1.0, abs(lhs))
