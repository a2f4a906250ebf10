"""Deterministic report files: JSON, CSV, Markdown and plain SVG line charts."""
from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Mapping, Sequence

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def svg_line_chart(
    series: Mapping[str, tuple[Sequence[float], Sequence[float], Sequence[float] | None]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 480,
    height: int = 320,
) -> str:
    """Render ``{name: (xs, ys, std_or_None)}`` as an SVG line chart with optional ±std bands.

    Coordinates are printed with fixed precision so the same data always
    yields the same bytes.
    """
    left, right, top, bottom = 56, 16, 28, 44
    pw, ph = width - left - right, height - top - bottom
    xs_all, ys_all = [], []
    for xs, ys, sd in series.values():
        xs_all += [float(x) for x in xs]
        for i, y in enumerate(ys):
            if math.isnan(y):
                continue
            s = 0.0 if sd is None or math.isnan(sd[i]) else float(sd[i])
            ys_all += [y - s, y + s]
    if not xs_all or not ys_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{left - 4}" y="{_fmt(py(yv) + 4)}" font-size="10" text-anchor="end">{yv:.3g}</text>')
        xv = x0 + (x1 - x0) * i / 4
        out.append(f'<text x="{_fmt(px(xv))}" y="{top + ph + 14}" font-size="10" text-anchor="middle">{xv:.3g}</text>')
    for i, (name, (xs, ys, sd)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(float(x), float(y), 0.0 if sd is None else float(sd[j])) for j, (x, y) in enumerate(zip(xs, ys)) if not math.isnan(y)]
        if not pts:
            continue
        if sd is not None and any(s > 0 for _, _, s in pts):
            upper = " ".join(f"{_fmt(px(x))},{_fmt(py(y + s))}" for x, y, s in pts)
            lower = " ".join(f"{_fmt(px(x))},{_fmt(py(y - s))}" for x, y, s in reversed(pts))
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y, _ in pts)
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{left + 6}" y="{top + 14 + 12 * i}" font-size="10" fill="{color}">{_escape(name)}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="16" font-size="12" text-anchor="middle">{_escape(title)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" font-size="11" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(
        f'<text x="12" y="{top + ph / 2:.1f}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 12 {top + ph / 2:.1f})">{_escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return _jsonable(obj.item())
    return obj


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def emit_report(
    subcommand: str,
    report: Mapping,
    files: Mapping[str, str],
    out_dir: str | Path,
    charts: bool = True,
) -> dict:
    """Write ``report.json`` plus ``<subcommand>_<name>`` files and a hashed ``manifest.json``.

    ``files`` maps ``"<name>.<ext>"`` to text content; ``.svg`` entries are
    skipped when ``charts`` is off. On an I/O error every file written so
    far is removed before the error propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    contents = {"report.json": to_json(report)}
    for name, text in sorted(files.items()):
        if name.endswith(".svg") and not charts:
            continue
        contents[f"{subcommand}_{name}"] = text
    manifest = {
        "subcommand": subcommand,
        "files": [{"path": n, "sha256": sha256(t), "bytes": len(t.encode("utf-8"))} for n, t in sorted(contents.items())],
    }
    contents["manifest.json"] = to_json(manifest)
    written: list[Path] = []
    try:
        for name, text in contents.items():
            path = out / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                written.append(path)
                fh.write(text)
    except OSError:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return manifest
