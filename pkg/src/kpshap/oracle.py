"""Coalition-value oracles.

An oracle answers one question: given a set of visible keypoints (a
coalition), what per-keypoint performance does the predictor under study
achieve? Three backends share the interface:

- synthetic: a closed-form test double with optional counter-based noise;
- tabular: exact lookup in a CSV of precomputed values;
- external: a child process speaking line-delimited JSON over stdin/stdout.

Wire protocol (external backend). The child prints a handshake first:

    {"op": "hello", "n": 17, "names": ["nose", ...]}

then answers one request per line:

    {"op": "eval", "instances": ["all"], "visible": [0, 1, 5], "trial": 0}
    -> {"values": [0.71, ...]}         (n floats in [0, 1])
    -> {"error": "message"}            (failure)

``instances`` is ["all"] or a list of instance id strings; "all" is reserved.
Environment overrides: KPSHAP_ORACLE_CMD replaces the child command line,
KPSHAP_ORACLE_TIMEOUT (seconds) replaces the I/O timeout.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import selectors
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, MissingCoalitionError, OracleError
from .rng import generator
from .skeleton import KeypointSchema

ALL_INSTANCES = "all"


@dataclass(frozen=True)
class Coalition:
    """Fixed-width bitset of visible keypoints; bit i = keypoint index i."""

    bits: int
    n: int

    def __post_init__(self):
        if not 1 <= self.n:
            raise DataError(f"coalition width must be positive, got {self.n}")
        if not 0 <= self.bits < (1 << self.n):
            raise DataError(f"coalition bits 0x{self.bits:x} out of range for n={self.n}")

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1, n)

    @classmethod
    def from_indices(cls, indices, n: int) -> "Coalition":
        bits = 0
        for i in indices:
            if not 0 <= i < n:
                raise DataError(f"keypoint index {i} out of range for n={n}")
            bits |= 1 << i
        return cls(bits, n)

    @classmethod
    def parse_hex(cls, text: str, n: int) -> "Coalition":
        try:
            bits = int(text.strip(), 16)
        except ValueError as e:
            raise DataError(f"bad coalition hex {text!r}") from e
        return cls(bits, n)

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.bits >> i & 1)

    def contains(self, i: int) -> bool:
        return bool(self.bits >> i & 1)

    def without(self, i: int) -> "Coalition":
        return Coalition(self.bits & ~(1 << i), self.n)

    def union(self, other: "Coalition") -> "Coalition":
        return Coalition(self.bits | other.bits, self.n)

    def hex(self) -> str:
        return f"0x{self.bits:x}"

    def __len__(self) -> int:
        return bin(self.bits).count("1")


def check_perf_vector(values, n: int) -> np.ndarray:
    """Validate and freeze one per-keypoint performance vector."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (n,):
        raise DataError(f"performance vector has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise DataError("performance vector contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError(f"performance values outside [0, 1]: min={arr.min()}, max={arr.max()}")
    arr.flags.writeable = False
    return arr


def _normalize_instances(instances):
    if isinstance(instances, str):
        if instances != ALL_INSTANCES:
            raise DataError(f"instance set must be a sequence or {ALL_INSTANCES!r}")
        return ALL_INSTANCES
    ids = tuple(str(i) for i in instances)
    if not ids:
        raise DataError("instance set is empty")
    if ALL_INSTANCES in ids:
        raise DataError(f"{ALL_INSTANCES!r} is reserved and cannot name an instance")
    return ids


class CoalitionValueOracle:
    """Base: validates widths on the way in and values on the way out."""

    def __init__(self, schema: KeypointSchema):
        self.schema = schema

    def eval(self, instances, coalition: Coalition, trial: int = 0) -> np.ndarray:
        if coalition.n != self.schema.n:
            raise DataError(
                f"coalition width {coalition.n} does not match schema n={self.schema.n}"
            )
        values = self._eval(_normalize_instances(instances), coalition, int(trial))
        return check_perf_vector(values, self.schema.n)

    def _eval(self, instances, coalition: Coalition, trial: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        """Stable identity string for run manifests."""
        return type(self).__name__

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class SyntheticModelConfig:
    """Closed-form predictor double.

    A visible keypoint scores its ceiling ``base[i]``. A hidden keypoint
    recovers part of its ceiling through the visible set: base[i] times the
    summed recovery weights of the visible keypoints. Noise, when enabled,
    is zero-mean Gaussian drawn per (instance, coalition, trial).
    """

    base: tuple[float, ...]
    recovery: tuple[tuple[float, ...], ...]
    noise_sd: float = 0.0

    def __post_init__(self):
        n = len(self.base)
        b = np.asarray(self.base, dtype=np.float64)
        w = np.asarray(self.recovery, dtype=np.float64)
        if w.shape != (n, n):
            raise DataError(f"recovery matrix shape {w.shape}, expected ({n}, {n})")
        if np.any(b <= 0.0) or np.any(b > 1.0):
            raise DataError("base values must lie in (0, 1]")
        if np.any(w < 0.0):
            raise DataError("recovery weights must be non-negative")
        if np.any(np.diag(w) != 0.0):
            raise DataError("recovery diagonal must be zero")
        if np.any(w.sum(axis=1) > 1.0 + 1e-12):
            raise DataError("recovery row sums must not exceed 1")
        if self.noise_sd < 0.0:
            raise DataError("noise_sd must be non-negative")

    @classmethod
    def from_json(cls, source) -> "SyntheticModelConfig":
        if isinstance(source, (str, Path)) and not (isinstance(source, str) and source.lstrip().startswith("{")):
            try:
                doc = json.loads(Path(source).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise DataError(f"cannot load synthetic config {source}: {e}") from e
        elif isinstance(source, str):
            doc = json.loads(source)
        else:
            doc = source
        try:
            return cls(
                base=tuple(float(v) for v in doc["base"]),
                recovery=tuple(tuple(float(v) for v in row) for row in doc["recovery"]),
                noise_sd=float(doc.get("noise_sd", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"bad synthetic config: {e}") from e

    def to_json_dict(self) -> dict:
        return {
            "base": list(self.base),
            "recovery": [list(r) for r in self.recovery],
            "noise_sd": self.noise_sd,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class SyntheticOracle(CoalitionValueOracle):
    """In-process oracle over a SyntheticModelConfig; instance universe {"0"}."""

    def __init__(self, config: SyntheticModelConfig, schema: KeypointSchema):
        if len(config.base) != schema.n:
            raise DataError(
                f"synthetic config is {len(config.base)}-wide, schema n={schema.n}"
            )
        super().__init__(schema)
        self.config = config
        self._base = np.asarray(config.base, dtype=np.float64)
        self._recovery = np.asarray(config.recovery, dtype=np.float64)
        self._digest = config.digest()

    def _eval(self, instances, coalition: Coalition, trial: int) -> np.ndarray:
        ids = ("0",) if instances == ALL_INSTANCES else instances
        n = self.schema.n
        vis = np.zeros(n, dtype=np.float64)
        for i in coalition.indices():
            vis[i] = 1.0
        core = self._base * vis + self._base * (self._recovery @ vis) * (1.0 - vis)
        if self.config.noise_sd == 0.0:
            return np.clip(core, 0.0, 1.0)
        acc = np.zeros(n, dtype=np.float64)
        for iid in ids:
            eps = generator(
                "synthetic-noise", self._digest, iid, coalition.bits, trial
            ).normal(0.0, self.config.noise_sd, size=n)
            acc += np.clip(core + eps, 0.0, 1.0)
        return acc / len(ids)

    def describe(self) -> str:
        return f"synthetic:{self._digest}"


def make_synthetic_oracle(config: SyntheticModelConfig, schema: KeypointSchema) -> SyntheticOracle:
    return SyntheticOracle(config, schema)


class TabularOracle(CoalitionValueOracle):
    """Exact lookup of precomputed per-coalition values.

    The table aggregates over the dataset already, so the instance set and
    trial index do not change the answer.
    """

    def __init__(self, schema: KeypointSchema, table: dict[int, np.ndarray], source: str = ""):
        super().__init__(schema)
        full = (1 << schema.n) - 1
        if full not in table:
            raise DataError("oracle table is missing the full coalition", code="missing-full-coalition")
        self.table = {m: check_perf_vector(v, schema.n) for m, v in table.items()}
        self.source = source

    def _eval(self, instances, coalition: Coalition, trial: int) -> np.ndarray:
        try:
            return self.table[coalition.bits]
        except KeyError:
            raise MissingCoalitionError(f"no value for coalition {coalition.hex()}") from None

    def describe(self) -> str:
        digest = hashlib.sha256()
        for mask in sorted(self.table):
            digest.update(b"%x:" % mask)
            digest.update(self.table[mask].tobytes())
        return f"tabular:rows={len(self.table)},sha256={digest.hexdigest()[:16]}"


def load_tabular_oracle(path, schema: KeypointSchema) -> TabularOracle:
    """CSV with columns coalition_hex, v_0 .. v_{n-1}."""
    n = schema.n
    expected = ["coalition_hex"] + [f"v_{i}" for i in range(n)]
    table: dict[int, np.ndarray] = {}
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != expected:
                raise DataError(
                    f"oracle table header {header} does not match schema (n={n})"
                )
            for lineno, row in enumerate(reader, start=2):
                if len(row) != n + 1:
                    raise DataError(f"{path}:{lineno}: row width {len(row)}, expected {n + 1}")
                mask = Coalition.parse_hex(row[0], n).bits
                if mask in table:
                    raise DataError(f"{path}:{lineno}: duplicate coalition 0x{mask:x}")
                try:
                    values = [float(x) for x in row[1:]]
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: non-numeric cell ({e})") from None
                table[mask] = np.asarray(values)
    except OSError as e:
        raise DataError(f"cannot read oracle table {path}: {e}") from e
    return TabularOracle(schema, table, source=str(path))


def write_oracle_table(path, schema: KeypointSchema, table: dict[int, np.ndarray]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["coalition_hex"] + [f"v_{i}" for i in range(schema.n)])
        for mask in sorted(table):
            w.writerow([f"0x{mask:x}"] + [format(float(v), ".10g") for v in table[mask]])


class CountingOracle(CoalitionValueOracle):
    """Wrapper that records every eval: total calls and distinct coalitions."""

    def __init__(self, inner: CoalitionValueOracle):
        super().__init__(inner.schema)
        self.inner = inner
        self.calls = 0
        self.coalitions: set[int] = set()
        self._lock = threading.Lock()

    def _eval(self, instances, coalition: Coalition, trial: int) -> np.ndarray:
        with self._lock:
            self.calls += 1
            self.coalitions.add(coalition.bits)
        return self.inner._eval(instances, coalition, trial)

    def reset(self) -> None:
        with self._lock:
            self.calls = 0
            self.coalitions = set()

    def describe(self) -> str:
        return f"counting({self.inner.describe()})"


def _dumps(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


class ExternalOracle(CoalitionValueOracle):
    """Client for a child process speaking the line-JSON protocol above."""

    def __init__(self, command, schema: KeypointSchema, timeout: float = 30.0):
        super().__init__(schema)
        command = os.environ.get("KPSHAP_ORACLE_CMD", command)
        env_timeout = os.environ.get("KPSHAP_ORACLE_TIMEOUT")
        if env_timeout is not None:
            try:
                timeout = float(env_timeout)
            except ValueError:
                raise OracleError(
                    f"KPSHAP_ORACLE_TIMEOUT={env_timeout!r} is not a number", code="oracle-io"
                ) from None
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise OracleError("empty oracle command", code="oracle-io")
        self.command = argv
        self.timeout = timeout
        self._lock = threading.Lock()
        self._buf = b""
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as e:
            raise OracleError(f"cannot start oracle {argv[0]!r}: {e}", code="oracle-io") from e
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)
        hello = self._read_message()
        if hello.get("op") != "hello":
            raise OracleError(f"expected hello handshake, got {hello!r}", code="oracle-io")
        names = tuple(hello.get("names", ()))
        if hello.get("n") != schema.n or names != schema.names:
            self.close()
            raise OracleError(
                f"oracle schema mismatch: child has n={hello.get('n')} names={names}, "
                f"expected n={schema.n} names={schema.names}",
                code="schema-mismatch",
            )

    def _read_line(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise OracleError(
                    f"oracle timed out after {self.timeout}s (buffered: {self._buf[:200]!r})",
                    code="oracle-io",
                )
            if not self._sel.select(timeout=remaining):
                continue
            chunk = os.read(self._proc.stdout.fileno(), 65536)
            if not chunk:
                raise OracleError(
                    f"oracle closed its output (exit={self._proc.poll()}, "
                    f"buffered: {self._buf[:200]!r})",
                    code="oracle-io",
                )
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _read_message(self) -> dict:
        line = self._read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise OracleError(f"oracle sent non-JSON line: {line[:200]!r}", code="oracle-io") from None
        if not isinstance(msg, dict):
            raise OracleError(f"oracle sent non-object message: {line[:200]!r}", code="oracle-io")
        return msg

    def _eval(self, instances, coalition: Coalition, trial: int) -> np.ndarray:
        request = {
            "op": "eval",
            "instances": [ALL_INSTANCES] if instances == ALL_INSTANCES else list(instances),
            "visible": list(coalition.indices()),
            "trial": trial,
        }
        with self._lock:
            if self._proc.poll() is not None:
                raise OracleError(
                    f"oracle process exited with {self._proc.returncode}", code="oracle-io"
                )
            try:
                self._proc.stdin.write(_dumps(request))
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise OracleError(f"cannot write to oracle: {e}", code="oracle-io") from e
            msg = self._read_message()
        if "error" in msg:
            raise OracleError(f"oracle reported: {msg['error']}")
        if "values" not in msg:
            raise OracleError(f"oracle response missing 'values': {msg!r}", code="oracle-io")
        return np.asarray(msg["values"], dtype=np.float64)

    def describe(self) -> str:
        return "external:" + " ".join(self.command)

    def close(self) -> None:
        if getattr(self, "_proc", None) is None:
            return
        try:
            self._sel.close()
        except Exception:
            pass
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except Exception:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None


def serve(oracle: CoalitionValueOracle, infile, outfile) -> None:
    """Answer the line-JSON protocol on (infile, outfile) until EOF.

    Used by the CLI to expose the synthetic backend as a child process;
    also handy for testing clients of the protocol.
    """
    n = oracle.schema.n
    outfile.write(_dumps({"op": "hello", "n": n, "names": list(oracle.schema.names)}).decode())
    outfile.flush()
    for raw in infile:
        if not raw.strip():
            continue
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict) or msg.get("op") != "eval":
                raise DataError(f"unsupported request: {raw.strip()[:200]}")
            inst = msg["instances"]
            instances = ALL_INSTANCES if inst == [ALL_INSTANCES] else tuple(str(i) for i in inst)
            coalition = Coalition.from_indices(msg["visible"], n)
            values = oracle.eval(instances, coalition, int(msg.get("trial", 0)))
            reply = {"values": [float(v) for v in values]}
        except Exception as e:  # a serving oracle must answer, not die
            reply = {"error": str(e)}
        outfile.write(_dumps(reply).decode())
        outfile.flush()
