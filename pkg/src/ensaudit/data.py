"""Prediction matrices with labels and group attributes.

A dataset is K samples, each with a binary label ``y``, a binary group
attribute ``a`` (1 = advantaged group) and the positive-class probability
assigned by each of N ensemble members.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class IngestionError(ValueError):
    """Raised when an input file or array fails validation."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class LabeledPredictions:
    sample_ids: tuple[str, ...]
    labels: np.ndarray
    groups: np.ndarray
    scores: np.ndarray
    member_names: tuple[str, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels)
        groups = np.asarray(self.groups)
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim == 1:
            scores = scores[:, None]
        if scores.ndim != 2:
            raise IngestionError(f"scores must be a K x N matrix, got shape {scores.shape}")
        k, n = scores.shape
        if k < 1 or n < 1:
            raise IngestionError("need at least one sample and one member")
        if len(self.sample_ids) != k or labels.shape != (k,) or groups.shape != (k,):
            raise IngestionError("sample_ids, labels, groups and scores disagree on K")
        if len(set(self.sample_ids)) != k:
            raise IngestionError("duplicate sample ids")
        for name, arr in (("y", labels), ("a", groups)):
            if not np.all((arr == 0) | (arr == 1)):
                raise IngestionError(f"{name} must be binary")
        if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
            raise IngestionError("scores must lie in [0, 1]")
        names = tuple(self.member_names) or tuple(f"m{i}" for i in range(n))
        if len(names) != n:
            raise IngestionError("member_names length does not match N")
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))
        object.__setattr__(self, "groups", _frozen(groups.astype(np.int8)))
        object.__setattr__(self, "scores", _frozen(scores))
        object.__setattr__(self, "member_names", names)

    @property
    def n_samples(self) -> int:
        return self.scores.shape[0]

    @property
    def n_members(self) -> int:
        return self.scores.shape[1]

    def with_scores(self, scores: np.ndarray, member_names: Sequence[str] = ()) -> "LabeledPredictions":
        return LabeledPredictions(self.sample_ids, self.labels, self.groups, scores, tuple(member_names))

    def subset(self, mask: np.ndarray) -> "LabeledPredictions":
        """Row subset (boolean mask or index array), members unchanged."""
        idx = np.arange(self.n_samples)[mask]
        return LabeledPredictions(
            tuple(self.sample_ids[i] for i in idx),
            self.labels[idx],
            self.groups[idx],
            self.scores[idx],
            self.member_names,
        )

    def equals(self, other: "LabeledPredictions") -> bool:
        return (
            self.sample_ids == other.sample_ids
            and self.member_names == other.member_names
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.groups, other.groups)
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True, eq=False)
class RunSet:
    """Members of several independently seeded ensembles scored on one test set."""

    data: LabeledPredictions
    run_of_member: tuple[int, ...]

    def __post_init__(self):
        runs = tuple(int(r) for r in self.run_of_member)
        if len(runs) != self.data.n_members:
            raise IngestionError("run assignment must cover every member exactly once")
        if not runs or min(runs) < 0:
            raise IngestionError("run indices must be non-negative")
        missing = set(range(max(runs) + 1)) - set(runs)
        if missing:
            raise IngestionError(f"empty runs: {sorted(missing)}")
        object.__setattr__(self, "run_of_member", runs)

    @classmethod
    def from_runs(cls, data: LabeledPredictions, runs: Sequence[Sequence[int]]) -> "RunSet":
        assignment = [-1] * data.n_members
        for r, members in enumerate(runs):
            if not members:
                raise IngestionError(f"run {r} is empty")
            for m in members:
                if not 0 <= m < data.n_members or assignment[m] != -1:
                    raise IngestionError(f"member {m} is out of range or listed twice")
                assignment[m] = r
        if -1 in assignment:
            raise IngestionError("run manifest does not cover every member")
        return cls(data, tuple(assignment))

    @classmethod
    def single_run(cls, data: LabeledPredictions) -> "RunSet":
        return cls(data, (0,) * data.n_members)

    @property
    def n_runs(self) -> int:
        return max(self.run_of_member) + 1

    def members_of(self, run: int) -> list[int]:
        return [m for m, r in enumerate(self.run_of_member) if r == run]

    def runs(self) -> list[list[int]]:
        return [self.members_of(r) for r in range(self.n_runs)]


@dataclass
class ValidationSummary:
    n_samples: int
    n_members: int
    group_counts: dict[int, int]
    cell_counts: dict[tuple[int, int], int]
    prevalence: dict[int, float | None]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_members": self.n_members,
            "group_counts": {str(a): c for a, c in self.group_counts.items()},
            "cell_counts": {f"{y},{a}": c for (y, a), c in self.cell_counts.items()},
            "prevalence": {str(a): p for a, p in self.prevalence.items()},
            "flags": list(self.flags),
        }


def validate_dataset(data: LabeledPredictions) -> ValidationSummary:
    y, a = data.labels, data.groups
    group_counts = {g: int(np.sum(a == g)) for g in (0, 1)}
    cells = {(t, g): int(np.sum((y == t) & (a == g))) for t in (0, 1) for g in (0, 1)}
    prevalence = {
        g: (cells[(1, g)] / group_counts[g] if group_counts[g] else None) for g in (0, 1)
    }
    flags = [f"empty group {g}" for g in (0, 1) if group_counts[g] == 0]
    flags += [f"empty cell ({t},{g})" for (t, g), c in cells.items() if c == 0]
    return ValidationSummary(data.n_samples, data.n_members, group_counts, cells, prevalence, flags)


def select_members(data: LabeledPredictions, indices: Sequence[int]) -> LabeledPredictions:
    idx = [int(i) for i in indices]
    if not idx:
        raise ValueError("member selection is empty")
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate member indices in {idx}")
    if min(idx) < 0 or max(idx) >= data.n_members:
        raise ValueError(f"member index out of range for N={data.n_members}: {idx}")
    return data.with_scores(data.scores[:, idx], [data.member_names[i] for i in idx])


def _parse_binary(text: str, row: int, column: str) -> int:
    if text.strip() not in ("0", "1"):
        raise IngestionError(f"expected 0 or 1, got {text!r}", row, column)
    return int(text)


def load_predictions(path: str | Path) -> LabeledPredictions:
    """Read a wide CSV ``sample_id,y,a,m0,...``; errors name the offending row and column.

    Rows are numbered from 1 for the first data line (the header is row 0).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["sample_id", "y", "a"] or len(header) < 4:
            raise IngestionError("header must start with sample_id,y,a followed by member columns", 0)
        members = header[3:]
        if len(set(members)) != len(members):
            raise IngestionError("duplicate member column names", 0)
        ids, ys, As, rows = [], [], [], []
        seen: set[str] = set()
        for r, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != len(header):
                raise IngestionError(f"expected {len(header)} fields, got {len(rec)}", r)
            sid = rec[0]
            if sid == "":
                raise IngestionError("missing sample id", r, "sample_id")
            if sid in seen:
                raise IngestionError(f"duplicate sample id {sid!r}", r, "sample_id")
            seen.add(sid)
            ys.append(_parse_binary(rec[1], r, "y"))
            As.append(_parse_binary(rec[2], r, "a"))
            vals = []
            for col, text in zip(members, rec[3:]):
                try:
                    v = float(text)
                except ValueError:
                    raise IngestionError(f"not a number: {text!r}", r, col) from None
                if not 0.0 <= v <= 1.0:
                    raise IngestionError(f"score {text} outside [0, 1]", r, col)
                vals.append(v)
            ids.append(sid)
            rows.append(vals)
    if not rows:
        raise IngestionError("no data rows")
    return LabeledPredictions(tuple(ids), np.array(ys), np.array(As), np.array(rows), tuple(members))


def predictions_to_csv(data: LabeledPredictions) -> str:
    # repr() gives the shortest round-tripping decimal, so load(save(x)) is bit-exact
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "y", "a", *data.member_names])
    for k in range(data.n_samples):
        w.writerow(
            [data.sample_ids[k], int(data.labels[k]), int(data.groups[k])]
            + [repr(float(s)) for s in data.scores[k]]
        )
    return buf.getvalue()


def save_predictions(data: LabeledPredictions, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(predictions_to_csv(data))


def load_manifest(path: str | Path) -> list[list[int]]:
    with Path(path).open(encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"run manifest is not valid JSON: {exc}") from None
    runs = doc.get("runs") if isinstance(doc, dict) else None
    if not isinstance(runs, list) or not all(isinstance(r, list) and r for r in runs):
        raise IngestionError('run manifest must look like {"runs": [[...], ...]} with non-empty runs')
    return [[int(m) for m in r] for r in runs]


def manifest_to_json(runset: RunSet) -> str:
    return json.dumps({"runs": runset.runs()}) + "\n"


def save_manifest(runset: RunSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_to_json(runset))


def load_runset(path: str | Path, manifest: str | Path | None = None) -> RunSet:
    data = load_predictions(path)
    if manifest is None:
        return RunSet.single_run(data)
    return RunSet.from_runs(data, load_manifest(manifest))
