"""Interdependency matrix and keypoint grouping.

The interdependency s = PI + KC combines measured influence with skeleton
connectivity. Groups come from agglomerative clustering on s: start from
singletons, repeatedly merge the most similar pair of clusters, stop at g.

Linkage is pluggable. "single" (merge on the strongest cross pair) is the
default: on the shipped reference drop table it is the linkage that yields
the anatomically correct five-part grouping, whereas averaging lets the two
hip joints pair up before either joins its own leg chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .skeleton import KeypointSchema

LINKAGES = ("single", "average", "complete")
DEFAULT_LINKAGE = "single"
DEFAULT_GROUPS = 5


@dataclass(frozen=True)
class Grouping:
    """A partition of keypoint indices; groups ordered by smallest member."""

    n: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        flat = [i for grp in self.groups for i in grp]
        if sorted(flat) != list(range(self.n)):
            raise DataError(
                f"groups are not a partition of 0..{self.n - 1}", code="bad-partition"
            )
        for grp in self.groups:
            if not grp:
                raise DataError("empty group", code="bad-partition")
            if list(grp) != sorted(grp):
                raise DataError(f"group {grp} is not sorted", code="bad-partition")
        mins = [grp[0] for grp in self.groups]
        if mins != sorted(mins):
            raise DataError("groups are not ordered by smallest member", code="bad-partition")

    @classmethod
    def from_sets(cls, sets, n: int) -> "Grouping":
        groups = tuple(sorted((tuple(sorted(s)) for s in sets), key=lambda t: t[0]))
        return cls(n, groups)

    @property
    def g(self) -> int:
        return len(self.groups)

    def group_of(self, i: int) -> int:
        for k, grp in enumerate(self.groups):
            if i in grp:
                return k
        raise DataError(f"index {i} not in grouping")

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(grp) for grp in self.groups)

    def to_json_dict(self, schema: KeypointSchema) -> dict:
        if schema.n != self.n:
            raise DataError(f"grouping over n={self.n}, schema has n={schema.n}")
        return {"groups": [[schema.names[i] for i in grp] for grp in self.groups], "g": self.g}

    @classmethod
    def from_json(cls, source, schema: KeypointSchema) -> "Grouping":
        if isinstance(source, (str, Path)) and not (
            isinstance(source, str) and source.lstrip().startswith("{")
        ):
            try:
                doc = json.loads(Path(source).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise DataError(f"cannot load grouping {source}: {e}") from e
        elif isinstance(source, str):
            doc = json.loads(source)
        else:
            doc = source
        try:
            sets = [[schema.index_of(nm) for nm in grp] for grp in doc["groups"]]
            declared = int(doc["g"])
        except (KeyError, TypeError) as e:
            raise DataError(f"bad grouping document: {e}") from e
        grouping = cls.from_sets(sets, schema.n)
        if grouping.g != declared:
            raise DataError(f"grouping declares g={declared} but has {grouping.g} groups")
        return grouping


def interdependency(pi: np.ndarray, kc: np.ndarray) -> np.ndarray:
    """Elementwise sum of influence and connectivity; symmetric, >= 0."""
    pi = np.asarray(pi, dtype=np.float64)
    kc = np.asarray(kc, dtype=np.float64)
    if pi.shape != kc.shape or pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise DataError(f"matrix shapes {pi.shape} and {kc.shape} do not agree")
    s = pi + kc
    if not np.all(np.isfinite(s)):
        raise DataError("interdependency contains non-finite values")
    if np.min(s) < 0.0:
        raise DataError("interdependency must be non-negative")
    if not np.allclose(s, s.T, atol=1e-12):
        raise DataError("interdependency must be symmetric")
    return s


def _cross(values: np.ndarray, a: tuple[int, ...], b: tuple[int, ...], linkage: str) -> float:
    block = values[np.ix_(a, b)]
    if linkage == "single":
        return float(block.max())
    if linkage == "average":
        return float(block.mean())
    return float(block.min())


def cluster(
    s: np.ndarray,
    g: int = DEFAULT_GROUPS,
    linkage: str = DEFAULT_LINKAGE,
) -> Grouping:
    """Agglomerate the n keypoints into exactly g groups.

    The diagonal never participates: only cross-cluster entries of s are
    compared. Ties are broken toward the pair whose (smallest member,
    smallest member) labels sort first, which pins the output exactly for
    any input.
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if s.ndim != 2 or s.shape != (n, n):
        raise DataError(f"similarity must be square, got {s.shape}")
    if not 1 <= g <= n:
        raise DataError(f"group count g={g} must be in 1..{n}", code="bad-group-count")
    if linkage not in LINKAGES:
        raise DataError(f"unknown linkage {linkage!r}, pick from {LINKAGES}")
    clusters: list[tuple[int, ...]] = [(i,) for i in range(n)]
    while len(clusters) > g:
        best_key = None
        best_pair = None
        for x in range(len(clusters)):
            for y in range(x + 1, len(clusters)):
                v = _cross(s, clusters[x], clusters[y], linkage)
                lo, hi = sorted((clusters[x][0], clusters[y][0]))
                key = (-v, lo, hi)
                if best_key is None or key < best_key:
                    best_key = key
                    best_pair = (x, y)
        x, y = best_pair
        merged = tuple(sorted(clusters[x] + clusters[y]))
        clusters = [c for k, c in enumerate(clusters) if k not in (x, y)]
        clusters.append(merged)
    return Grouping.from_sets(clusters, n)
