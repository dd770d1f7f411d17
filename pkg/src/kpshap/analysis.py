"""Confidence-correlation analysis and deterministic artifact rendering.

The labeled-matrix CSV format used across the toolkit lives here too: a
header row of column labels after a corner cell, then one row per label.
Matrices are square and row labels must repeat the column labels in order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


def write_matrix_csv(path, labels, matrix, corner: str = "keypoint") -> None:
    arr = np.asarray(matrix, dtype=np.float64)
    labels = list(labels)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] != len(labels):
        raise DataError(f"matrix {arr.shape} does not match {len(labels)} labels")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([corner] + labels)
        for i, name in enumerate(labels):
            w.writerow([name] + [format(float(v), ".10g") for v in arr[i]])


def read_matrix_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Returns (labels, matrix); the corner header cell is ignored."""
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or len(header) < 2:
                raise DataError(f"{path}: missing matrix header")
            labels = tuple(header[1:])
            if len(set(labels)) != len(labels):
                raise DataError(f"{path}: duplicate column labels")
            rows = []
            seen = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(labels) + 1:
                    raise DataError(
                        f"{path}:{lineno}: row width {len(row)}, expected {len(labels) + 1}"
                    )
                seen.append(row[0])
                try:
                    rows.append([float(x) for x in row[1:]])
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: non-numeric cell ({e})") from None
    except OSError as e:
        raise DataError(f"cannot read matrix {path}: {e}") from e
    if tuple(seen) != labels:
        raise DataError(f"{path}: row labels {seen} do not match column labels {list(labels)}")
    return labels, np.asarray(rows, dtype=np.float64)


@dataclass(frozen=True)
class ConfidenceTable:
    """Per-instance confidence vectors; NaN marks an unlabeled keypoint."""

    names: tuple[str, ...]
    instances: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape != (len(self.instances), len(self.names)):
            raise DataError(
                f"confidence table shape {arr.shape} does not match "
                f"{len(self.instances)} instances x {len(self.names)} keypoints"
            )
        if arr.shape[0] < 2:
            raise DataError("confidence table needs at least 2 rows")
        present = arr[~np.isnan(arr)]
        if present.size and (present.min() < 0.0 or present.max() > 1.0):
            raise DataError("confidence scores must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return len(self.names)


def write_confidence_csv(path, table: ConfidenceTable) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["instance"] + list(table.names))
        for i, iid in enumerate(table.instances):
            w.writerow(
                [iid]
                + [
                    "" if math.isnan(v) else format(float(v), ".10g")
                    for v in table.values[i]
                ]
            )


def read_confidence_csv(path) -> ConfidenceTable:
    """Header: instance,<names>; empty cell = missing score."""
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or len(header) < 2 or header[0] != "instance":
                raise DataError(f"{path}: expected header instance,<keypoint names>")
            names = tuple(header[1:])
            instances = []
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(names) + 1:
                    raise DataError(
                        f"{path}:{lineno}: row width {len(row)}, expected {len(names) + 1}"
                    )
                instances.append(row[0])
                try:
                    rows.append(
                        [float("nan") if cell == "" else float(cell) for cell in row[1:]]
                    )
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: non-numeric cell ({e})") from None
    except OSError as e:
        raise DataError(f"cannot read confidence table {path}: {e}") from e
    return ConfidenceTable(names, tuple(instances), np.asarray(rows, dtype=np.float64))


@dataclass(frozen=True)
class CorrelationResult:
    matrix: np.ndarray
    zero_variance: tuple[int, ...]


def confidence_correlation(table: ConfidenceTable) -> CorrelationResult:
    """Pairwise-complete Pearson correlation of keypoint confidences.

    For each pair only rows where both scores are present contribute. A pair
    where either side has zero variance over the shared rows gets the
    sentinel 0 and the flat column is flagged (and warned about) instead of
    producing a 0/0.
    """
    vals = table.values
    n = table.n
    present = ~np.isnan(vals)
    corr = np.eye(n)
    flat: set[int] = set()
    for i in range(n):
        for j in range(i + 1, n):
            both = present[:, i] & present[:, j]
            m = int(both.sum())
            if m < 2:
                raise DataError(
                    f"only {m} rows where both {table.names[i]} and "
                    f"{table.names[j]} are present, need at least 2",
                    code="insufficient-pairs",
                )
            xi = vals[both, i] - vals[both, i].mean()
            xj = vals[both, j] - vals[both, j].mean()
            si = float(np.sqrt(np.dot(xi, xi)))
            sj = float(np.sqrt(np.dot(xj, xj)))
            if si == 0.0 or sj == 0.0:
                if si == 0.0:
                    flat.add(i)
                if sj == 0.0:
                    flat.add(j)
                corr[i, j] = corr[j, i] = 0.0
                continue
            r = float(np.dot(xi, xj)) / (si * sj)
            corr[i, j] = corr[j, i] = min(1.0, max(-1.0, r))
    if flat:
        names = ", ".join(table.names[k] for k in sorted(flat))
        warnings.warn(f"zero-variance confidence columns: {names}", stacklevel=2)
    return CorrelationResult(corr, tuple(sorted(flat)))


RAMP_LOW = (0xF7, 0xFB, 0xFF)
RAMP_HIGH = (0x08, 0x30, 0x6B)


def _ramp_color(t: float) -> str:
    channels = (
        int(math.floor(lo + (hi - lo) * t + 0.5)) for lo, hi in zip(RAMP_LOW, RAMP_HIGH)
    )
    return "#%02x%02x%02x" % tuple(channels)


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def render_heatmap(matrix, labels) -> str:
    """Square labeled heatmap as standalone SVG 1.1 text.

    Output is a pure function of (matrix, labels): fixed layout constants,
    explicit number formatting everywhere, ramp endpoints declared in the
    document <desc>. Cell color interpolates from the data minimum to the
    data maximum (a constant matrix renders at the ramp top).
    """
    arr = np.asarray(matrix, dtype=np.float64)
    labels = [str(x) for x in labels]
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] != len(labels):
        raise DataError(f"matrix {arr.shape} does not match {len(labels)} labels")
    if not np.isfinite(arr).all():
        raise DataError("heatmap input must be finite")
    n = len(labels)
    vmin = float(arr.min())
    vmax = float(arr.max())
    span = vmax - vmin
    cell = 44
    pad = 8
    label_px = max(len(s) for s in labels) * 7 + 2 * pad
    width = label_px + n * cell + pad
    height = label_px + n * cell + pad
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<desc>linear ramp {_ramp_color(0.0)} at {vmin:.10g} to "
        f"{_ramp_color(1.0)} at {vmax:.10g}</desc>",
        '<g font-family="monospace" font-size="11">',
    ]
    for j, name in enumerate(labels):
        x = label_px + j * cell + cell // 2
        out.append(
            f'<text x="{x}" y="{label_px - pad}" text-anchor="start" '
            f'transform="rotate(-90 {x} {label_px - pad})">{_esc(name)}</text>'
        )
    for i, name in enumerate(labels):
        y = label_px + i * cell + cell // 2 + 4
        out.append(
            f'<text x="{label_px - pad}" y="{y}" text-anchor="end">{_esc(name)}</text>'
        )
    for i in range(n):
        for j in range(n):
            v = float(arr[i, j])
            t = 1.0 if span == 0.0 else (v - vmin) / span
            x = label_px + j * cell
            y = label_px + i * cell
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_ramp_color(t)}" stroke="#ffffff" stroke-width="1"/>'
            )
            ink = "#ffffff" if t > 0.55 else "#000000"
            out.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" '
                f'text-anchor="middle" fill="{ink}">{v:.3g}</text>'
            )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
