"""Receiver-receiver similarity graphs and their time-decayed combination.

Each historical snapshot ``R^t`` yields a symmetric receiver graph ``w^t``;
``combine_graphs`` folds H of them into ``w_bar = sum_t theta^(H+1-t) w^t`` so
the newest slice is weighted by ``theta`` and the oldest by ``theta^H``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .temporal_graph import Snapshot, SparseKnownSet, TemporalNetwork


def _inner_product(known: SparseKnownSet) -> sp.csr_matrix:
    R = known.to_csr()
    return (R.T @ R).tocsr()


def _binary(known: SparseKnownSet) -> sp.csr_matrix:
    B = sp.csr_matrix((np.ones(known.nnz), (known.rows, known.cols)), shape=known.shape)
    return (B.T @ B).tocsr()


def _cosine(known: SparseKnownSet) -> sp.csr_matrix:
    R = known.to_csr()
    norms = np.sqrt(np.asarray(R.multiply(R).sum(axis=0)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    Rn = R @ sp.diags(inv)
    return (Rn.T @ Rn).tocsr()


WeightScheme = Callable[[SparseKnownSet], sp.spmatrix]

WEIGHT_SCHEMES: dict[str, WeightScheme] = {
    "inner-product": _inner_product,
    "binary": _binary,
    "cosine": _cosine,
}


def _clean(W: sp.spmatrix) -> sp.csr_matrix:
    W = sp.csr_matrix(W, dtype=np.float64)
    W.setdiag(0.0)
    W.eliminate_zeros()
    W.sort_indices()
    return W


@dataclass(frozen=True)
class ReceiverGraph:
    t: int
    weights: sp.csr_matrix

    @property
    def num_receivers(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class CombinedGraph:
    weights: sp.csr_matrix
    degree: np.ndarray
    theta: float
    alpha: float

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def num_receivers(self):
        return self.weights.shape[0]


def nearest_neighbors(W: sp.csr_matrix, p: int) -> sp.csr_matrix:
    """Keep pair ``(j, l)`` if ``l`` is among ``j``'s ``p`` heaviest neighbours or vice versa.

    Ties go to the lower receiver index. Kept weights are unchanged, so the
    result stays symmetric and scales with ``W``. ``p = 0`` keeps every pair.
    """
    if p < 0:
        raise ValueError(f"neighbour count must be >= 0, got {p}")
    W = _clean(W)
    if p == 0 or W.nnz == 0:
        return W
    row = np.repeat(np.arange(W.shape[0]), np.diff(W.indptr))
    order = np.lexsort((W.indices, -W.data, row))
    rank = np.empty(W.nnz, dtype=np.int64)
    rank[order] = np.arange(W.nnz) - W.indptr[row[order]]
    keep = sp.csr_matrix(((rank < p).astype(np.float64), W.indices, W.indptr), shape=W.shape)
    mask = keep.maximum(keep.T)
    return _clean(W.multiply(mask))


def build_receiver_graph(snapshot: Snapshot, scheme: str | WeightScheme = "inner-product",
                         neighbors: int = 0) -> ReceiverGraph:
    """Co-sender similarity ``w_jl = sum_i r_ij r_il`` (j != l) for one slice.

    ``neighbors > 0`` sparsifies the slice graph with :func:`nearest_neighbors`.
    """
    fn = WEIGHT_SCHEMES[scheme] if isinstance(scheme, str) else scheme
    return ReceiverGraph(snapshot.t, nearest_neighbors(fn(snapshot.known), neighbors))


def combine_graphs(graphs: Sequence[ReceiverGraph], theta: float, alpha: float) -> CombinedGraph:
    if not graphs:
        raise ValueError("combine_graphs needs at least one historical graph")
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    n = graphs[0].num_receivers
    if any(g.num_receivers != n for g in graphs):
        raise ValueError("all graphs must span the same receivers")
    H = len(graphs)
    W = sp.csr_matrix((n, n))
    for t, g in enumerate(graphs, start=1):
        W = W + theta ** (H + 1 - t) * g.weights
    W = _clean(W)
    degree = np.asarray(W.sum(axis=1)).ravel()
    degree.setflags(write=False)
    return CombinedGraph(W, degree, theta, alpha)


def history_graph(network: TemporalNetwork, upto: int, theta: float, alpha: float,
                  scheme: str | WeightScheme = "inner-product", neighbors: int = 0) -> CombinedGraph:
    """Combined graph over slices ``1..upto`` of ``network``."""
    graphs = [build_receiver_graph(s, scheme, neighbors) for s in network.snapshots[:upto]]
    return combine_graphs(graphs, theta, alpha)


def effective_weights(graph: CombinedGraph, counts: np.ndarray | None = None) -> sp.csr_matrix:
    """Pair weights entering the objective.

    With per-receiver known counts ``c``, pair ``(j, l)`` is weighted by
    ``(c_j + c_l) / 2``. This is the symmetric form of charging receiver
    ``j``'s neighbourhood penalty once per known entry in its column.
    """
    W = graph.weights
    if counts is None:
        return W
    counts = np.asarray(counts, dtype=np.float64)
    coo = W.tocoo()
    data = coo.data * 0.5 * (counts[coo.row] + counts[coo.col])
    out = sp.csr_matrix((data, (coo.row, coo.col)), shape=W.shape)
    out.sort_indices()
    return out


def _check_dims(graph: CombinedGraph, Y: np.ndarray):
    if Y.ndim != 2 or Y.shape[0] != graph.num_receivers:
        raise ValueError(f"Y has {Y.shape[0] if Y.ndim else 0} rows, graph has {graph.num_receivers} receivers")


def regularizer_value(graph: CombinedGraph, Y: np.ndarray, counts: np.ndarray | None = None) -> float:
    """``alpha * sum_{j,l} w_jl ||y_j - y_l||^2`` over ordered pairs."""
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(graph, Y)
    if graph.alpha == 0:
        return 0.0
    coo = effective_weights(graph, counts).tocoo()
    diff = Y[coo.row] - Y[coo.col]
    return float(graph.alpha * np.dot(coo.data, np.einsum("ek,ek->e", diff, diff)))


def laplacian_form(graph: CombinedGraph, Y: np.ndarray, counts: np.ndarray | None = None) -> float:
    """``2 alpha * sum_k y_k^T (D - W) y_k``; equals :func:`regularizer_value`."""
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(graph, Y)
    W = effective_weights(graph, counts)
    d = np.asarray(W.sum(axis=1)).ravel()
    quad = np.einsum("jk,j,jk->", Y, d, Y) - np.einsum("jk,jk->", Y, W @ Y)
    return float(2.0 * graph.alpha * quad)


def dump_graph(graph: CombinedGraph, fh) -> None:
    """Write nonzero weights as ``j l weight`` lines sorted by ``(j, l)``."""
    coo = graph.weights.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for j, l, w in zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()):
        fh.write(f"{j} {l} {w!r}\n")
