"""Exact Shapley attribution, coarse-to-fine over keypoint groups.

Pricing every keypoint against every other needs 2^n oracle calls. Grouping
cuts this two ways: a within-group stage prices each member against its own
group while everything outside stays visible, and a group-level stage prices
whole groups against each other. Both stages are exact Shapley computations
over at most a handful of players, so the budget collapses from 2^n to
sum_k 2^|G_k| + 2^g.

Every stage enumerates its coalition set once and reuses the resulting
per-keypoint vectors for all targets of that stage, so the oracle sees each
stage coalition exactly once no matter how many targets it serves.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .grouping import Grouping
from .oracle import Coalition, CoalitionValueOracle
from .rng import generator
from .skeleton import KeypointSchema

MAX_PLAYERS = 20

SPLIT_MODES = ("uniform", "proportional")


@dataclass(frozen=True)
class ShapleyTable:
    """Exact attribution of one target over a set of players."""

    target: str
    players: tuple[str, ...]
    phi: tuple[float, ...]
    value_full: float
    value_empty: float

    def __post_init__(self):
        if len(self.players) != len(self.phi):
            raise DataError("players and phi lengths differ")

    def efficiency_gap(self) -> float:
        return abs(sum(self.phi) - (self.value_full - self.value_empty))

    def to_json_dict(self) -> dict:
        return {
            "target": self.target,
            "players": list(self.players),
            "phi": [float(v) for v in self.phi],
            "value_full": float(self.value_full),
            "value_empty": float(self.value_empty),
        }


@dataclass(frozen=True)
class QueryBudget:
    """Oracle work: distinct coalitions evaluated, and total eval calls."""

    distinct_coalitions: int
    oracle_calls: int

    def __post_init__(self):
        if self.distinct_coalitions < 0 or self.oracle_calls < 0:
            raise DataError("budget counts must be non-negative")
        if self.distinct_coalitions > self.oracle_calls:
            raise DataError("distinct coalitions cannot exceed total calls")


def _check_player_count(n: int) -> None:
    if n < 1:
        raise DataError(f"need at least one player, got {n}")
    if n > MAX_PLAYERS:
        raise DataError(
            f"{n} players would need 2^{n} evaluations; limit is {MAX_PLAYERS}",
            code="too-many-players",
        )


def _popcounts(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    size = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        size += (masks >> b) & 1
    return size


def exact_shapley(value, n: int, players=None, target: str = "") -> ShapleyTable:
    """Exact Shapley values of a scalar coalition game.

    ``value`` maps a bitmask over n players to a float. Every one of the 2^n
    masks is evaluated exactly once; marginal gains are then weighted by the
    classic |S|! (n-|S|-1)! / n! coefficients.
    """
    _check_player_count(n)
    if players is None:
        players = tuple(f"p{i}" for i in range(n))
    players = tuple(players)
    if len(players) != n:
        raise DataError(f"{len(players)} player labels for n={n}")

    table = np.empty(1 << n, dtype=np.float64)
    for mask in range(1 << n):
        table[mask] = float(value(mask))
    if not np.all(np.isfinite(table)):
        raise DataError("game value is non-finite")

    size = _popcounts(n)
    fact = [math.factorial(k) for k in range(n + 1)]
    weight = np.array(
        [fact[k] * fact[n - 1 - k] / fact[n] for k in range(n)], dtype=np.float64
    )
    masks = np.arange(1 << n, dtype=np.int64)
    phi = np.empty(n, dtype=np.float64)
    for j in range(n):
        without = masks[(masks >> j) & 1 == 0]
        gains = table[without | (1 << j)] - table[without]
        phi[j] = float(np.sum(weight[size[without]] * gains))
    return ShapleyTable(
        target=target,
        players=players,
        phi=tuple(float(v) for v in phi),
        value_full=float(table[-1]),
        value_empty=float(table[0]),
    )


def read_game_csv(path) -> tuple[int, np.ndarray]:
    """Scalar game table: header coalition_hex,value, all 2^n rows present.

    n is inferred from the row count, so the table must be complete.
    Returns (n, values indexed by bitmask).
    """
    rows: dict[int, float] = {}
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != ["coalition_hex", "value"]:
                raise DataError(f"{path}: expected header coalition_hex,value, got {header}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 2:
                    raise DataError(f"{path}:{lineno}: row width {len(row)}, expected 2")
                try:
                    mask = int(row[0], 16)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad coalition hex {row[0]!r}") from None
                if mask < 0:
                    raise DataError(f"{path}:{lineno}: negative coalition {row[0]!r}")
                if mask in rows:
                    raise DataError(f"{path}:{lineno}: duplicate coalition 0x{mask:x}")
                try:
                    rows[mask] = float(row[1])
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: non-numeric value ({e})") from None
    except OSError as e:
        raise DataError(f"cannot read game table {path}: {e}") from e
    count = len(rows)
    if count < 2 or count & (count - 1):
        raise DataError(f"{path}: {count} rows, expected a complete 2^n table")
    n = count.bit_length() - 1
    _check_player_count(n)
    if set(rows) != set(range(count)):
        missing = min(set(range(count)) - set(rows))
        raise DataError(f"{path}: incomplete table, e.g. missing coalition 0x{missing:x}")
    return n, np.array([rows[m] for m in range(count)], dtype=np.float64)


def write_game_csv(path, values) -> None:
    arr = np.asarray(values, dtype=np.float64)
    count = arr.shape[0]
    if arr.ndim != 1 or count < 2 or count & (count - 1):
        raise DataError(f"game table must hold 2^n scalar values, got shape {arr.shape}")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["coalition_hex", "value"])
        for mask in range(count):
            w.writerow([f"0x{mask:x}", format(float(arr[mask]), ".10g")])


def sampled_shapley(
    value, n: int, permutations: int, seed: int = 0, players=None, target: str = ""
) -> ShapleyTable:
    """Permutation-sampling estimate; comparison baseline, not used by the
    attribution pipeline. Coalition values are memoized across permutations."""
    _check_player_count(n)
    if permutations < 1:
        raise DataError("need at least one permutation")
    if players is None:
        players = tuple(f"p{i}" for i in range(n))
    memo: dict[int, float] = {}

    def v(mask: int) -> float:
        if mask not in memo:
            memo[mask] = float(value(mask))
        return memo[mask]

    rng = generator("sampled-shapley", seed)
    phi = np.zeros(n, dtype=np.float64)
    for _ in range(permutations):
        order = rng.permutation(n)
        mask = 0
        prev = v(0)
        for j in order:
            mask |= 1 << int(j)
            cur = v(mask)
            phi[j] += cur - prev
            prev = cur
    phi /= permutations
    return ShapleyTable(
        target=target,
        players=tuple(players),
        phi=tuple(float(x) for x in phi),
        value_full=v((1 << n) - 1),
        value_empty=v(0),
    )


def _eval_coalitions(oracle, coalitions, instances, trial, jobs):
    def run(c):
        return oracle.eval(instances, c, trial)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, coalitions))
    return [run(c) for c in coalitions]


def _scatter(local_mask: int, members: tuple[int, ...]) -> int:
    bits = 0
    for pos, idx in enumerate(members):
        if local_mask >> pos & 1:
            bits |= 1 << idx
    return bits


def _intra_stage(oracle, grouping: Grouping, k: int, instances, trial, jobs):
    """All 2^|G_k| vectors for subsets of group k, rest of body visible."""
    n = grouping.n
    members = grouping.groups[k]
    _check_player_count(len(members))
    group_bits = _scatter((1 << len(members)) - 1, members)
    out_bits = ((1 << n) - 1) & ~group_bits
    coalitions = [
        Coalition(out_bits | _scatter(m, members), n) for m in range(1 << len(members))
    ]
    vectors = _eval_coalitions(oracle, coalitions, instances, trial, jobs)
    return members, vectors


def _group_stage(oracle, grouping: Grouping, instances, trial, jobs):
    """All 2^g vectors for unions of whole groups."""
    n = grouping.n
    g = grouping.g
    _check_player_count(g)
    group_bits = [_scatter((1 << len(grp)) - 1, grp) for grp in grouping.groups]
    coalitions = []
    for cmask in range(1 << g):
        bits = 0
        for h in range(g):
            if cmask >> h & 1:
                bits |= group_bits[h]
        coalitions.append(Coalition(bits, n))
    return _eval_coalitions(oracle, coalitions, instances, trial, jobs)


def intra_group_shapley(
    oracle: CoalitionValueOracle,
    grouping: Grouping,
    target: int,
    instances="all",
    trial: int = 0,
    jobs: int = 1,
) -> ShapleyTable:
    """Shapley values of the target over its own group.

    The conditional game keeps every out-of-group keypoint visible and varies
    only the group members, reading off the target's performance component.
    """
    schema_names = oracle.schema.names
    k = grouping.group_of(target)
    members, vectors = _intra_stage(oracle, grouping, k, instances, trial, jobs)
    return exact_shapley(
        lambda m: vectors[m][target],
        len(members),
        players=tuple(schema_names[i] for i in members),
        target=schema_names[target],
    )


def group_label(k: int) -> str:
    return f"group{k + 1}"


def group_shapley(
    oracle: CoalitionValueOracle,
    grouping: Grouping,
    target_group: int,
    instances="all",
    trial: int = 0,
    jobs: int = 1,
) -> ShapleyTable:
    """Shapley values of whole groups for one target group.

    Players are the groups; a coalition's value is the mean performance of
    the target group's members when exactly those groups are visible.
    """
    if not 0 <= target_group < grouping.g:
        raise DataError(f"target group {target_group} out of range")
    vectors = _group_stage(oracle, grouping, instances, trial, jobs)
    members = list(grouping.groups[target_group])
    return exact_shapley(
        lambda m: float(np.mean(vectors[m][members])),
        grouping.g,
        players=tuple(group_label(h) for h in range(grouping.g)),
        target=group_label(target_group),
    )


def normalize_nonneg(values) -> np.ndarray:
    """Clamp negatives to zero and rescale to a unit sum."""
    arr = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
    total = arr.sum()
    if total <= 0.0:
        raise DataError(
            "no positive mass to normalize", code="degenerate-attribution"
        )
    return arr / total


def query_count(grouping: Grouping, trials: int = 1) -> QueryBudget:
    """Predicted budget of a full coarse-to-fine run (per instance batch)."""
    distinct = sum(1 << len(grp) for grp in grouping.groups) + (1 << grouping.g)
    return QueryBudget(distinct, distinct * trials)


def exact_query_count(n: int, trials: int = 1) -> QueryBudget:
    """Budget of pricing all n keypoints jointly: the full 2^n sweep."""
    distinct = 1 << n
    return QueryBudget(distinct, distinct * trials)


@dataclass(frozen=True)
class AttributionReport:
    """Full output of a coarse-to-fine run.

    ``sigma`` is the n x n combined attribution: row i says how target i's
    performance splits across all keypoints (within-group members get the
    group share times their within-group share; other groups' shares are
    split across their members). Rows are non-negative and sum to 1.
    """

    names: tuple[str, ...]
    grouping: Grouping
    split_mode: str
    intra_tables: tuple[ShapleyTable, ...]
    group_tables: tuple[ShapleyTable, ...]
    sigma: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "names": list(self.names),
            "grouping": {
                "groups": [[self.names[i] for i in grp] for grp in self.grouping.groups],
                "g": self.grouping.g,
            },
            "split_mode": self.split_mode,
            "intra_tables": [t.to_json_dict() for t in self.intra_tables],
            "group_tables": [t.to_json_dict() for t in self.group_tables],
            "attribution": [[float(v) for v in row] for row in self.sigma],
        }


def combined_attribution(
    schema: KeypointSchema,
    grouping: Grouping,
    intra_tables,
    group_tables,
    split_mode: str = "uniform",
) -> AttributionReport:
    """Combine the two stages into one n x n attribution matrix.

    ``intra_tables`` has one table per keypoint (over its group's members);
    ``group_tables`` one per group (over all groups). Cross-group mass is
    split uniformly across the foreign group's members, or proportionally to
    each member's own normalized within-group self-value in
    ``proportional`` mode.
    """
    if split_mode not in SPLIT_MODES:
        raise DataError(f"unknown split mode {split_mode!r}, pick from {SPLIT_MODES}")
    n = schema.n
    intra_tables = tuple(intra_tables)
    group_tables = tuple(group_tables)
    if len(intra_tables) != n or len(group_tables) != grouping.g:
        raise DataError("need one intra table per keypoint and one group table per group")

    intra_norm = [normalize_nonneg(t.phi) for t in intra_tables]
    group_norm = [normalize_nonneg(t.phi) for t in group_tables]

    # self_share[j]: keypoint j's normalized within-group self-value
    self_share = np.empty(n, dtype=np.float64)
    for j in range(n):
        members = grouping.groups[grouping.group_of(j)]
        self_share[j] = intra_norm[j][members.index(j)]

    sigma = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        gi = grouping.group_of(i)
        psi = group_norm[gi]
        row = np.zeros(n, dtype=np.float64)
        for pos, j in enumerate(grouping.groups[gi]):
            row[j] = psi[gi] * intra_norm[i][pos]
        for h in range(grouping.g):
            if h == gi:
                continue
            members = list(grouping.groups[h])
            if split_mode == "proportional":
                w = self_share[members]
                w = w / w.sum() if w.sum() > 0 else np.full(len(members), 1 / len(members))
            else:
                w = np.full(len(members), 1.0 / len(members))
            row[members] = psi[h] * w
        sigma[i] = normalize_nonneg(row)

    return AttributionReport(
        names=schema.names,
        grouping=grouping,
        split_mode=split_mode,
        intra_tables=intra_tables,
        group_tables=group_tables,
        sigma=sigma,
    )


def run_group_attribution(
    oracle: CoalitionValueOracle,
    grouping: Grouping,
    instances="all",
    trial: int = 0,
    jobs: int = 1,
    split_mode: str = "uniform",
) -> tuple[AttributionReport, QueryBudget]:
    """Full coarse-to-fine run over every keypoint and group.

    Each within-group stage is evaluated once and shared by all its members'
    tables; the group stage once for all group tables. Total oracle calls
    therefore match query_count(grouping) exactly.
    """
    schema = oracle.schema
    n = schema.n
    if grouping.n != n:
        raise DataError(f"grouping over n={grouping.n}, oracle schema has n={n}")

    intra_tables: list[ShapleyTable | None] = [None] * n
    calls = 0
    distinct: set[int] = set()
    for k, members in enumerate(grouping.groups):
        members, vectors = _intra_stage(oracle, grouping, k, instances, trial, jobs)
        calls += len(vectors)
        out_bits = ((1 << n) - 1) & ~_scatter((1 << len(members)) - 1, members)
        distinct.update(out_bits | _scatter(m, members) for m in range(len(vectors)))
        for pos, i in enumerate(members):
            intra_tables[i] = exact_shapley(
                lambda m, i=i: vectors[m][i],
                len(members),
                players=tuple(schema.names[idx] for idx in members),
                target=schema.names[i],
            )

    vectors = _group_stage(oracle, grouping, instances, trial, jobs)
    calls += len(vectors)
    group_bits = [_scatter((1 << len(grp)) - 1, grp) for grp in grouping.groups]
    for cmask in range(1 << grouping.g):
        bits = 0
        for h in range(grouping.g):
            if cmask >> h & 1:
                bits |= group_bits[h]
        distinct.add(bits)
    group_tables = []
    for h in range(grouping.g):
        members = list(grouping.groups[h])
        group_tables.append(
            exact_shapley(
                lambda m, members=members: float(np.mean(vectors[m][members])),
                grouping.g,
                players=tuple(group_label(i) for i in range(grouping.g)),
                target=group_label(h),
            )
        )

    report = combined_attribution(schema, grouping, intra_tables, group_tables, split_mode)
    return report, QueryBudget(len(distinct), calls)
