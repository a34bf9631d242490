"""Temporal bipartite transaction networks.

Edge streams are parsed into :class:`TemporalEdge` records, binned into ``T``
sparse snapshots over one global sender/receiver index, and split temporally:
slices ``1..T-2`` train, ``T-1`` validates, ``T`` tests.
"""

from __future__ import annotations

import hashlib
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

COLUMNS = ("sender", "receiver", "timestamp", "value", "slice")
TRANSFORMS = ("log1p", "identity")
AGGREGATIONS = ("decayed-sum", "decayed-mean", "plain-sum", "last-slice")
NET_MAGIC = "grnlfa-net v1"


class EdgeParseError(ValueError):
    """Raised when one or more records of an edge stream are malformed.

    ``errors`` holds ``(line_number, message)`` pairs, 1-based.
    """

    def __init__(self, errors: list[tuple[int, str]]):
        self.errors = errors
        lines = "; ".join(f"line {n}: {msg}" for n, msg in errors[:20])
        more = f" (+{len(errors) - 20} more)" if len(errors) > 20 else ""
        super().__init__(f"{len(errors)} malformed record(s): {lines}{more}")


class NetworkConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TemporalEdge:
    sender: str
    receiver: str
    timestamp: int
    value: float
    slice: int | None = None

    def __post_init__(self):
        if not self.sender or not self.receiver:
            raise ValueError("sender and receiver identifiers must be non-empty")
        if not self.value >= 0:
            raise ValueError(f"edge value must be non-negative, got {self.value}")


@dataclass(frozen=True)
class EdgeFormat:
    """Layout of a delimited edge file.

    ``header=None`` skips the first record only if it literally names the
    columns.
    """

    delimiter: str = ","
    header: bool | None = None
    slice_column: bool = False


class SparseKnownSet:
    """Dual-indexed store of known entries ``(i, j, r)``.

    Entries are kept sorted by ``(i, j)`` so row slices are contiguous;
    ``col_order`` is a permutation that makes column slices contiguous.
    Duplicate ``(i, j)`` pairs are merged by summing their values.
    """

    def __init__(self, rows, cols, vals, shape: tuple[int, int]):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols and vals must have equal length")
        n_rows, n_cols = int(shape[0]), int(shape[1])
        if len(rows):
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
                raise IndexError("entry index outside of shape")
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise ValueError("known values must be finite and non-negative")

        key = rows * n_cols + cols
        order = np.argsort(key, kind="stable")
        key, vals = key[order], vals[order]
        if len(key):
            starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            vals = np.add.reduceat(vals, starts)
            key = key[starts]

        self.shape = (n_rows, n_cols)
        self.rows = key // max(n_cols, 1)
        self.cols = key % max(n_cols, 1)
        self.vals = vals
        self.row_counts = np.bincount(self.rows, minlength=n_rows)
        self.col_counts = np.bincount(self.cols, minlength=n_cols)
        self.row_ptr = np.r_[0, np.cumsum(self.row_counts)]
        self.col_order = np.lexsort((self.rows, self.cols))
        self.col_ptr = np.r_[0, np.cumsum(self.col_counts)]
        for arr in (self.rows, self.cols, self.vals, self.row_counts, self.col_counts,
                    self.row_ptr, self.col_order, self.col_ptr):
            arr.setflags(write=False)

    @classmethod
    def empty(cls, shape):
        return cls([], [], [], shape)

    @classmethod
    def from_dense(cls, R, mask=None):
        R = np.asarray(R, dtype=np.float64)
        if mask is None:
            mask = R != 0
        i, j = np.nonzero(mask)
        return cls(i, j, R[i, j], R.shape)

    def __len__(self):
        return len(self.vals)

    @property
    def nnz(self):
        return len(self.vals)

    def __repr__(self):
        return f"SparseKnownSet(shape={self.shape}, nnz={self.nnz})"

    def __eq__(self, other):
        if not isinstance(other, SparseKnownSet):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols) and np.array_equal(self.vals, other.vals))

    __hash__ = None

    def row_slice(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Receivers and values of Λ(i)."""
        a, b = self.row_ptr[i], self.row_ptr[i + 1]
        return self.cols[a:b], self.vals[a:b]

    def col_slice(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Senders and values of Λ(j)."""
        idx = self.col_order[self.col_ptr[j]:self.col_ptr[j + 1]]
        return self.rows[idx], self.vals[idx]

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for i, j, r in zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()):
            yield i, j, r

    def scaled(self, c: float) -> "SparseKnownSet":
        return SparseKnownSet(self.rows, self.cols, self.vals * c, self.shape)

    def map_values(self, fn) -> "SparseKnownSet":
        return SparseKnownSet(self.rows, self.cols, fn(self.vals), self.shape)

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype=np.int64).tobytes())
        for arr in (self.rows, self.cols, self.vals):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def combine_known_sets(sets: Sequence[SparseKnownSet], weights: Sequence[float] | None = None) -> SparseKnownSet:
    """Weighted entry-wise sum; the known set is the union of the inputs."""
    if not sets:
        raise ValueError("need at least one known set")
    shape = sets[0].shape
    if any(s.shape != shape for s in sets):
        raise ValueError("known sets must share a shape")
    if weights is None:
        weights = [1.0] * len(sets)
    rows = np.concatenate([s.rows for s in sets])
    cols = np.concatenate([s.cols for s in sets])
    vals = np.concatenate([s.vals * w for s, w in zip(sets, weights)])
    return SparseKnownSet(rows, cols, vals, shape)


def decayed_mean(sets: Sequence[SparseKnownSet], weights: Sequence[float]) -> SparseKnownSet:
    """Weighted mean over the slices in which each pair is observed."""
    total = combine_known_sets(sets, weights)
    norm = combine_known_sets([SparseKnownSet(s.rows, s.cols, np.ones(s.nnz), s.shape) for s in sets], weights)
    return SparseKnownSet(total.rows, total.cols, total.vals / norm.vals, total.shape)


@dataclass(frozen=True)
class NodeIndex:
    sender_map: dict[str, int]
    receiver_map: dict[str, int]

    @property
    def num_senders(self):
        return len(self.sender_map)

    @property
    def num_receivers(self):
        return len(self.receiver_map)

    @classmethod
    def dense(cls, num_senders: int, num_receivers: int) -> "NodeIndex":
        return cls({str(i): i for i in range(num_senders)}, {str(j): j for j in range(num_receivers)})


@dataclass(frozen=True)
class Snapshot:
    t: int
    known: SparseKnownSet


@dataclass(frozen=True)
class TemporalNetwork:
    snapshots: tuple[Snapshot, ...]
    index: NodeIndex

    def __post_init__(self):
        ts = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise NetworkConfigError("slice indices must strictly increase")
        if len(self.snapshots) < 3:
            raise NetworkConfigError(f"a temporal network needs T >= 3 slices, got {len(self.snapshots)}")
        shape = (self.index.num_senders, self.index.num_receivers)
        if any(s.known.shape != shape for s in self.snapshots):
            raise NetworkConfigError("every snapshot must span the global index")

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.index.num_senders, self.index.num_receivers)

    @property
    def num_entries(self) -> int:
        return sum(s.known.nnz for s in self.snapshots)

    def snapshot(self, t: int) -> Snapshot:
        return self.snapshots[t - 1]

    def empty_slices(self) -> list[int]:
        return [s.t for s in self.snapshots if s.known.nnz == 0]

    def map_values(self, fn) -> "TemporalNetwork":
        snaps = tuple(Snapshot(s.t, s.known.map_values(fn)) for s in self.snapshots)
        return TemporalNetwork(snaps, self.index)


@dataclass(frozen=True)
class DataSplit:
    train_slices: tuple[Snapshot, ...]
    validation_slice: Snapshot
    test_slice: Snapshot
    train_target: SparseKnownSet
    theta: float
    aggregation: str = "decayed-sum"

    @property
    def shape(self):
        return self.train_target.shape


# --------------------------------------------------------------------------- parsing


def _parse_timestamp(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not math.isfinite(value) or value != int(value):
            raise ValueError(f"timestamp {text!r} is not an integer")
        return int(value)


def _is_header(fields: list[str]) -> bool:
    return [f.strip().lower() for f in fields] == list(COLUMNS[:len(fields)])


def parse_edge_stream(lines: Iterable[str], fmt: EdgeFormat = EdgeFormat()) -> list[TemporalEdge]:
    """Parse delimited ``sender,receiver,timestamp,value[,slice]`` records.

    Blank lines and ``#`` comments are skipped. All malformed records are
    collected and raised together as one :class:`EdgeParseError`.
    """
    n_fields = 5 if fmt.slice_column else 4
    edges: list[TemporalEdge] = []
    errors: list[tuple[int, str]] = []
    first = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split(fmt.delimiter)
        if first:
            first = False
            if fmt.header or (fmt.header is None and _is_header(fields)):
                continue
        if len(fields) != n_fields:
            errors.append((lineno, f"expected {n_fields} fields, got {len(fields)}"))
            continue
        sender, receiver = fields[0].strip(), fields[1].strip()
        try:
            ts = _parse_timestamp(fields[2].strip())
        except ValueError:
            errors.append((lineno, f"non-numeric timestamp {fields[2]!r}"))
            continue
        try:
            value = float(fields[3])
        except ValueError:
            errors.append((lineno, f"non-numeric value {fields[3]!r}"))
            continue
        if not math.isfinite(value):
            errors.append((lineno, f"non-finite value {fields[3]!r}"))
            continue
        if value < 0:
            errors.append((lineno, f"negative value {value}"))
            continue
        if not sender or not receiver:
            errors.append((lineno, "empty sender or receiver identifier"))
            continue
        slice_t = None
        if fmt.slice_column:
            try:
                slice_t = int(fields[4])
            except ValueError:
                errors.append((lineno, f"non-integer slice {fields[4]!r}"))
                continue
            if slice_t < 1:
                errors.append((lineno, f"slice index must be >= 1, got {slice_t}"))
                continue
        edges.append(TemporalEdge(sender, receiver, ts, value, slice_t))
    if errors:
        raise EdgeParseError(errors)
    return edges


def read_edge_file(path, fmt: EdgeFormat = EdgeFormat()) -> list[TemporalEdge]:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_stream(fh, fmt)


def write_edge_file(edges: Sequence[TemporalEdge], path, delimiter=",") -> None:
    with_slice = any(e.slice is not None for e in edges)
    cols = COLUMNS if with_slice else COLUMNS[:4]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(cols) + "\n")
        for e in edges:
            row = [e.sender, e.receiver, str(e.timestamp), repr(float(e.value))]
            if with_slice:
                row.append(str(e.slice))
            fh.write(delimiter.join(row) + "\n")


# --------------------------------------------------------------------------- building


def bin_timestamps(timestamps: np.ndarray, num_slices: int) -> np.ndarray:
    """Assign 1-based slices from ``num_slices`` equal-width bins over [min, max].

    Bins are right-closed, ``(a, b]``, with the first bin also holding the
    minimum. Integer arithmetic keeps boundaries exact.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    lo, hi = int(ts.min()), int(ts.max())
    span = hi - lo
    if span == 0:
        raise NetworkConfigError("all timestamps are identical; cannot bin into multiple slices")
    pos = (ts - lo) * num_slices
    b = -((-pos) // span)  # ceil(pos / span)
    return np.clip(b, 1, num_slices)


def _transform_fn(name: str):
    if name == "log1p":
        return np.log1p
    if name == "identity":
        return lambda v: v
    raise NetworkConfigError(f"unknown value transform {name!r}; expected one of {TRANSFORMS}")


def build_network(edges: Sequence[TemporalEdge], num_slices: int | None = None, *,
                  explicit_slices: bool = False, transform: str = "log1p") -> TemporalNetwork:
    """Bin edges into snapshots over one global node index.

    With ``explicit_slices`` each edge's ``slice`` field is used and
    ``num_slices`` (if given) only extends ``T`` to cover trailing empty slices.
    Duplicate pairs within a slice are summed before ``transform`` is applied.
    """
    fn = _transform_fn(transform)
    if explicit_slices:
        if any(e.slice is None for e in edges):
            raise NetworkConfigError("explicit slicing requires a slice on every edge")
        slices = np.array([e.slice for e in edges], dtype=np.int64)
        T = max(int(slices.max()) if len(slices) else 0, num_slices or 0)
    else:
        if num_slices is None:
            raise NetworkConfigError("num_slices is required unless slices are explicit")
        T = num_slices
        if T < 3:
            raise NetworkConfigError(f"num_slices must be >= 3, got {T}")
        if not edges:
            raise NetworkConfigError("cannot bin an empty edge stream")
        slices = bin_timestamps(np.array([e.timestamp for e in edges]), T)
    if T < 3:
        raise NetworkConfigError(f"a temporal network needs T >= 3 slices, got {T}")

    senders: dict[str, int] = {}
    receivers: dict[str, int] = {}
    rows = np.empty(len(edges), dtype=np.int64)
    cols = np.empty(len(edges), dtype=np.int64)
    for n, e in enumerate(edges):
        rows[n] = senders.setdefault(e.sender, len(senders))
        cols[n] = receivers.setdefault(e.receiver, len(receivers))
    vals = np.array([e.value for e in edges], dtype=np.float64)
    index = NodeIndex(senders, receivers)
    shape = (len(senders), len(receivers))

    snaps = []
    for t in range(1, T + 1):
        sel = slices == t
        known = SparseKnownSet(rows[sel], cols[sel], vals[sel], shape)
        snaps.append(Snapshot(t, known.map_values(fn)))
    net = TemporalNetwork(tuple(snaps), index)
    empty = net.empty_slices()
    if empty:
        logger.warning("empty slices: %s", empty)
    return net


# --------------------------------------------------------------------------- splitting


def aggregation_weights(num_train: int, theta: float, aggregation: str = "decayed-sum") -> list[float]:
    """Per-slice weights for training slices ``1..num_train``; the newest gets exponent 0."""
    if aggregation in ("decayed-sum", "decayed-mean"):
        return [theta ** (num_train - t) for t in range(1, num_train + 1)]
    if aggregation == "plain-sum":
        return [1.0] * num_train
    if aggregation == "last-slice":
        return [0.0] * (num_train - 1) + [1.0]
    raise ValueError(f"unknown train aggregation {aggregation!r}; expected one of {AGGREGATIONS}")


def temporal_split(network: TemporalNetwork, theta: float, aggregation: str = "decayed-sum") -> DataSplit:
    if network.T < 3:
        raise ValueError(f"temporal split needs T >= 3, got {network.T}")
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    train = network.snapshots[:-2]
    weights = aggregation_weights(len(train), theta, aggregation)
    if aggregation == "last-slice":
        target = train[-1].known
    elif aggregation == "decayed-mean":
        target = decayed_mean([s.known for s in train], weights)
    else:
        target = combine_known_sets([s.known for s in train], weights)
    return DataSplit(tuple(train), network.snapshots[-2], network.snapshots[-1], target, theta, aggregation)


# --------------------------------------------------------------------------- serialization


def dump_network(network: TemporalNetwork, fh) -> None:
    U, S = network.shape
    fh.write(f"{NET_MAGIC} T={network.T} U={U} S={S}\n")
    for snap in network.snapshots:
        for i, j, r in snap.known.entries():
            fh.write(f"{snap.t} {i} {j} {r!r}\n")


def dumps_network(network: TemporalNetwork) -> str:
    buf = io.StringIO()
    dump_network(network, buf)
    return buf.getvalue()


def save_network(network: TemporalNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        dump_network(network, fh)


def _parse_header(line: str, magic: str, keys: Sequence[str]) -> dict[str, int]:
    if not line.startswith(magic):
        raise ValueError(f"not a {magic!r} file")
    parts = dict(p.split("=", 1) for p in line[len(magic):].split())
    try:
        return {k: int(parts[k]) for k in keys}
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad header {line!r}") from exc


def loads_network(text: str) -> TemporalNetwork:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty network file")
    hdr = _parse_header(lines[0], NET_MAGIC, ("T", "U", "S"))
    T, U, S = hdr["T"], hdr["U"], hdr["S"]
    data = [ln.split() for ln in lines[1:] if ln.strip()]
    arr_t = np.array([int(d[0]) for d in data], dtype=np.int64)
    arr_i = np.array([int(d[1]) for d in data], dtype=np.int64)
    arr_j = np.array([int(d[2]) for d in data], dtype=np.int64)
    arr_r = np.array([float(d[3]) for d in data], dtype=np.float64)
    snaps = []
    for t in range(1, T + 1):
        sel = arr_t == t
        snaps.append(Snapshot(t, SparseKnownSet(arr_i[sel], arr_j[sel], arr_r[sel], (U, S))))
    return TemporalNetwork(tuple(snaps), NodeIndex.dense(U, S))


def load_network(path) -> TemporalNetwork:
    return loads_network(Path(path).read_text(encoding="utf-8"))
