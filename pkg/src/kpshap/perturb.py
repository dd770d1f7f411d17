"""Single-keypoint perturbation screening.

Hiding one keypoint at a time and recording how every keypoint's performance
drops gives a cheap n x n interaction screen. The drop matrix (fractions in
memory, percent on disk) feeds the pairwise influence measure used for
grouping.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .oracle import Coalition, CoalitionValueOracle
from .rng import generator, mix64
from .skeleton import KeypointSchema, canonical_name


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class MaskSpec:
    """One rectangular noise mask; rect is (x0, y0, x1, y1), half-open."""

    center: tuple[float, float]
    width: int
    height: int
    rect: tuple[int, int, int, int]
    fill: str = "noise"


def gen_masks(
    keypoint: tuple[float, float],
    m: int,
    base_scale: float,
    bounds: tuple[int, int],
    seed: int,
    area_range: tuple[float, float] = (0.5, 1.5),
    aspect_range: tuple[float, float] = (0.5, 2.0),
) -> list[MaskSpec]:
    """m noise masks centered at a keypoint, clipped to the image.

    Nominal side = base_scale * min(W, H). Mask area is an area_range-uniform
    multiple of side^2 and the aspect ratio is log-uniform in aspect_range.
    """
    x, y = float(keypoint[0]), float(keypoint[1])
    w_img, h_img = bounds
    if m < 1:
        raise DataError(f"mask count must be >= 1, got {m}")
    if not (0.0 <= x < w_img and 0.0 <= y < h_img):
        raise DataError(
            f"keypoint ({x}, {y}) outside bounds {w_img}x{h_img}", code="out-of-bounds"
        )
    if base_scale <= 0:
        raise DataError(f"base_scale must be positive, got {base_scale}")
    side2 = (base_scale * min(w_img, h_img)) ** 2
    rng = generator("masks", seed)
    masks = []
    for _ in range(m):
        area = rng.uniform(*area_range) * side2
        aspect = math.exp(rng.uniform(math.log(aspect_range[0]), math.log(aspect_range[1])))
        w = max(1, _round_half_up(math.sqrt(area * aspect)))
        h = max(1, _round_half_up(math.sqrt(area / aspect)))
        x0 = min(max(_round_half_up(x - w / 2), 0), w_img - 1)
        y0 = min(max(_round_half_up(y - h / 2), 0), h_img - 1)
        x1 = min(x0 + w, w_img)
        y1 = min(y0 + h, h_img)
        masks.append(MaskSpec((x, y), x1 - x0, y1 - y0, (x0, y0, x1, y1)))
    return masks


@dataclass(frozen=True)
class DeltaMatrix:
    """Per-keypoint baselines and the drop caused by hiding each keypoint.

    drops[i][j] is how much keypoint i's performance falls when keypoint j is
    hidden. Values are fractions of 1 in memory; serialization uses percent
    to stay directly comparable with published tables.
    """

    names: tuple[str, ...]
    baseline: np.ndarray
    drops: np.ndarray

    def __post_init__(self):
        n = len(self.names)
        base = np.asarray(self.baseline, dtype=np.float64)
        drops = np.asarray(self.drops, dtype=np.float64)
        if base.shape != (n,) or drops.shape != (n, n):
            raise DataError(
                f"delta shapes {base.shape}/{drops.shape} do not match {n} names"
            )
        if not (np.all(np.isfinite(base)) and np.all(np.isfinite(drops))):
            raise DataError("delta matrix contains non-finite values")
        if base.min() < 0.0 or base.max() > 1.0:
            raise DataError("baselines must lie in [0, 1]")
        if drops.min() < 0.0:
            raise DataError("drops must be non-negative")
        over = drops > base[:, None] + 1e-12
        if np.any(over):
            i, j = map(int, np.argwhere(over)[0])
            raise DataError(
                f"drop[{self.names[i]}][{self.names[j]}]={drops[i, j]} exceeds "
                f"baseline {base[i]}"
            )
        base.flags.writeable = False
        drops.flags.writeable = False
        object.__setattr__(self, "baseline", base)
        object.__setattr__(self, "drops", drops)

    @property
    def n(self) -> int:
        return len(self.names)


def delta_perf_matrix(
    oracle: CoalitionValueOracle,
    instances="all",
    m: int = 1,
    seed: int = 0,
    jobs: int = 1,
) -> DeltaMatrix:
    """Hide each keypoint alone, average over m trials, clamp drops at 0.

    The unperturbed reference uses the same trial set as the perturbed runs.
    Trial indices are derived from (seed, t), so the oracle's counter-based
    noise is reproducible and independent of evaluation order.
    """
    if m < 1:
        raise DataError(f"trial count must be >= 1, got {m}")
    n = oracle.schema.n
    full = Coalition.full(n)
    trials = [mix64("delta-trial", seed, t) for t in range(m)]
    tasks = [(full, t) for t in trials]
    tasks += [(full.without(j), t) for j in range(n) for t in trials]

    def run(task):
        coalition, trial = task
        return oracle.eval(instances, coalition, trial)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    baseline = np.mean(results[:m], axis=0)
    drops = np.zeros((n, n), dtype=np.float64)
    for j in range(n):
        perturbed = np.mean(results[m * (j + 1) : m * (j + 2)], axis=0)
        drops[:, j] = np.maximum(0.0, baseline - perturbed)
    return DeltaMatrix(oracle.schema.names, baseline, drops)


def perturbation_influence(delta: DeltaMatrix) -> np.ndarray:
    """Symmetrized share-of-row influence in [0, 1].

    Each row of drops is normalized to shares, then the directed shares are
    averaged: PI(i, j) = (share[i][j] + share[j][i]) / 2. A keypoint whose
    row sums to zero has no defined shares.
    """
    sums = delta.drops.sum(axis=1)
    dead = np.flatnonzero(sums == 0.0)
    if dead.size:
        bad = ", ".join(delta.names[i] for i in dead)
        raise DataError(f"all-zero drop row for: {bad}", code="degenerate-row")
    share = delta.drops / sums[:, None]
    return 0.5 * (share + share.T)


def oracle_table_from_delta(delta: DeltaMatrix) -> dict[int, np.ndarray]:
    """Full coalition plus every single-removal coalition, as oracle rows."""
    n = delta.n
    full = (1 << n) - 1
    table = {full: delta.baseline.copy()}
    for j in range(n):
        table[full & ~(1 << j)] = delta.baseline - delta.drops[:, j]
    return table


def _fmt(v: float) -> str:
    return format(float(v), ".10g")


def write_delta_csv(path, delta: DeltaMatrix) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["keypoint", "baseline", *delta.names])
        for i, nm in enumerate(delta.names):
            w.writerow(
                [nm, _fmt(delta.baseline[i] * 100)] + [_fmt(v * 100) for v in delta.drops[i]]
            )


def read_delta_csv(path, schema: KeypointSchema) -> DeltaMatrix:
    """Parse the percent-format drop table; alias spellings accepted."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read delta table {path}: {e}") from e
    if not rows:
        raise DataError(f"delta table {path} is empty")
    header = [canonical_name(c.strip()) for c in rows[0]]
    expected = ["keypoint", "baseline", *schema.names]
    if header != expected:
        raise DataError(
            f"delta header {header[:4]}... does not match schema columns"
        )
    n = schema.n
    baseline = np.full(n, np.nan)
    drops = np.full((n, n), np.nan)
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n + 2:
            raise DataError(f"{path}:{lineno}: row width {len(row)}, expected {n + 2}")
        i = schema.index_of(row[0].strip())
        if i in seen:
            raise DataError(f"{path}:{lineno}: duplicate row for {schema.names[i]}")
        seen.add(i)
        try:
            baseline[i] = float(row[1]) / 100.0
            drops[i] = [float(x) / 100.0 for x in row[2:]]
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: non-numeric cell ({e})") from None
    if len(seen) != n:
        missing = [schema.names[i] for i in range(n) if i not in seen]
        raise DataError(f"delta table missing rows for: {', '.join(missing)}")
    return DeltaMatrix(schema.names, baseline, drops)
