"""Expected calibration error and per-group accuracy-vs-threshold scans."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_BINS = 15


@dataclass
class EceResult:
    ece: float
    bins: list[dict]


def ece_table(scores, labels, n_bins: int = DEFAULT_BINS) -> EceResult:
    """ECE of the thresholded binary prediction with confidence binned over [0.5, 1].

    Bins are right-closed; a confidence on an interior edge falls in the
    lower bin and the first bin also takes 0.5 itself.
    """
    if n_bins < 1:
        raise ValueError("need at least one bin")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels must be aligned")
    edges = np.linspace(0.5, 1.0, n_bins + 1)
    if s.size == 0:
        return EceResult(math.nan, [])
    pred = (s > 0.5).astype(int)
    conf = np.maximum(s, 1.0 - s)
    correct = pred == y
    idx = np.searchsorted(edges[1:-1], conf, side="left")
    total = 0.0
    bins = []
    for b in range(n_bins):
        m = idx == b
        count = int(m.sum())
        row = {"lower": float(edges[b]), "upper": float(edges[b + 1]), "count": count, "accuracy": None, "confidence": None}
        if count:
            acc = float(correct[m].mean())
            c = float(conf[m].mean())
            row.update(accuracy=acc, confidence=c)
            total += count / s.size * abs(acc - c)
        bins.append(row)
    return EceResult(total, bins)


def ece(scores, labels, n_bins: int = DEFAULT_BINS) -> float:
    return ece_table(scores, labels, n_bins).ece


def default_grid() -> np.ndarray:
    return np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass
class ThresholdScan:
    grid: np.ndarray
    acc_all: np.ndarray
    acc_a0: np.ndarray
    acc_a1: np.ndarray

    def best(self, a: int | None) -> tuple[float, float]:
        """(threshold, accuracy) maximizing the curve; ties go to the smallest threshold."""
        curve = self.acc_all if a is None else (self.acc_a0, self.acc_a1)[a]
        if np.all(np.isnan(curve)):
            return math.nan, math.nan
        i = int(np.nanargmax(curve))
        return float(self.grid[i]), float(curve[i])

    def to_rows(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(t), float(x), float(u), float(v))
            for t, x, u, v in zip(self.grid, self.acc_all, self.acc_a0, self.acc_a1)
        ]


def _accuracy_curve(s, y, grid):
    if s.size == 0:
        return np.full(grid.size, math.nan)
    decisions = s[None, :] > grid[:, None]
    return (decisions == (y[None, :] == 1)).mean(axis=1)


def threshold_scan(scores, labels, groups, grid=None) -> ThresholdScan:
    g = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    if g[0] < 0 or g[-1] > 1:
        raise ValueError("grid must lie within [0, 1]")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    a = np.asarray(groups)
    return ThresholdScan(
        grid=g,
        acc_all=_accuracy_curve(s, y, g),
        acc_a0=_accuracy_curve(s[a == 0], y[a == 0], g),
        acc_a1=_accuracy_curve(s[a == 1], y[a == 1], g),
    )
