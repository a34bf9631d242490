"""Non-negative latent factor training on the known entries of a sparse matrix.

Three models share one training loop:

``nlfa``
    Multiplicative updates that touch only known entries (SLF-NMU).
``grnlfa``
    The same X update; the Y update adds graph neighbour attraction in the
    numerator and a degree term in the denominator (SLF-NMGRU).
``nmf-dense``
    Lee-Seung Frobenius NMF on the zero-filled dense training matrix.

An epoch is batched and two-phase: all of X from the current Y, then all of Y
from the new X. Within the Y phase graph terms read the pre-update Y.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels as _k
from .regularizer import CombinedGraph, effective_weights, regularizer_value
from .temporal_graph import DataSplit, SparseKnownSet

logger = logging.getLogger(__name__)

MODELS = ("nmf-dense", "nlfa", "grnlfa")
INIT_SCALE = 0.01


@dataclass
class FactorMatrices:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[1] != self.Y.shape[1]:
            raise ValueError(f"incompatible factor shapes {self.X.shape} and {self.Y.shape}")
        if self.X.shape[1] < 1:
            raise ValueError("latent dimension K must be >= 1")

    @property
    def K(self) -> int:
        return self.X.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.X.shape[0], self.Y.shape[0])

    def copy(self) -> "FactorMatrices":
        return FactorMatrices(self.X.copy(), self.Y.copy())

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.X >= 0) and np.all(self.Y >= 0))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y)))


@dataclass(frozen=True)
class TrainConfig:
    K: int = 20
    alpha: float = 0.01
    theta: float = 0.5
    max_epochs: int = 1000
    tolerance: float = 1e-5
    seed: int = 42
    model: str = "grnlfa"
    epsilon: float = 1e-8
    lambda_scaling: bool = True

    def violations(self) -> list[str]:
        out = []
        if self.model not in MODELS:
            out.append(f"model must be one of {MODELS}, got {self.model!r}")
        if not (isinstance(self.K, int) and self.K >= 1):
            out.append(f"K must be an integer >= 1, got {self.K!r}")
        if not self.alpha >= 0:
            out.append(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.theta <= 1:
            out.append(f"theta must lie in (0, 1], got {self.theta}")
        if not (isinstance(self.max_epochs, int) and self.max_epochs >= 1):
            out.append(f"max_epochs must be an integer >= 1, got {self.max_epochs!r}")
        if not self.tolerance >= 0:
            out.append(f"tolerance must be >= 0, got {self.tolerance}")
        if not self.epsilon >= 0:
            out.append(f"epsilon must be >= 0, got {self.epsilon}")
        return out

    def validate(self) -> "TrainConfig":
        problems = self.violations()
        if problems:
            raise ValueError("invalid training config: " + "; ".join(problems))
        return self


@dataclass
class BestEpoch:
    epoch: int
    rmse: float
    mae: float
    elapsed: float
    factors: FactorMatrices


@dataclass
class TrainResult:
    factors: FactorMatrices
    epochs_run: int
    objective_trace: list[float]
    validation_trace: list[tuple[float, float]]
    stop_reason: str
    wall_time: float
    epoch_times: list[float]
    initial_objective: float
    best_rmse: BestEpoch
    best_mae: BestEpoch
    model: str = "grnlfa"

    @property
    def per_epoch_time(self) -> float:
        return float(np.mean(self.epoch_times)) if self.epoch_times else 0.0


# --------------------------------------------------------------------------- kernels


class _Entries:
    """Known entries laid out in row-major and column-major order for the kernels."""

    def __init__(self, known: SparseKnownSet):
        self.known = known
        co = known.col_order
        self.rows = np.ascontiguousarray(known.rows)
        self.row_ptr = np.ascontiguousarray(known.row_ptr, dtype=np.int64)
        self.cols = np.ascontiguousarray(known.cols)
        self.vals = np.ascontiguousarray(known.vals)
        self.col_ptr = np.ascontiguousarray(known.col_ptr, dtype=np.int64)
        self.col_rows = np.ascontiguousarray(known.rows[co])
        self.col_vals = np.ascontiguousarray(known.vals[co])

    def predict(self, X, Y):
        return _k.predict(self.rows, self.cols, X, Y)

    def sse(self, X, Y):
        return _k.sse(self.rows, self.cols, self.vals, X, Y)


_NO_GRAPH = (np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))


class _GraphTerms:
    """Effective pair weights (CSR arrays) and their row sums for the Y update."""

    def __init__(self, graph: CombinedGraph | None, known: SparseKnownSet, lambda_scaling: bool):
        self.active = graph is not None and graph.alpha > 0
        if not self.active:
            self.alpha = 0.0
            self.ptr, self.idx, self.val, self.d = _NO_GRAPH
            self.S = known.shape[1]
            return
        if graph.num_receivers != known.shape[1]:
            raise ValueError("graph and training set disagree on receiver count")
        self.alpha = float(graph.alpha)
        W = effective_weights(graph, known.col_counts if lambda_scaling else None)
        self.W = W
        self.ptr = np.ascontiguousarray(W.indptr, dtype=np.int64)
        self.idx = np.ascontiguousarray(W.indices, dtype=np.int64)
        self.val = np.ascontiguousarray(W.data, dtype=np.float64)
        self.d = np.asarray(W.sum(axis=1), dtype=np.float64).ravel()

    def penalty(self, Y) -> float:
        if not self.active:
            return 0.0
        return self.alpha * _k.pair_penalty(self.ptr, self.idx, self.val, Y)


def _update_x(f: FactorMatrices, ent: _Entries, eps: float) -> tuple[np.ndarray, float]:
    """New X and the squared error of ``f``."""
    return _k.update_x(ent.row_ptr, ent.cols, ent.vals, f.X, f.Y, float(eps))


def _update_y(X: np.ndarray, Y: np.ndarray, ent: _Entries, eps: float,
              g: _GraphTerms | None = None) -> tuple[np.ndarray, float]:
    """New Y and the graph penalty (including alpha) of the input Y."""
    if g is None or not g.active:
        ptr, idx, val, d = _NO_GRAPH
        alpha2 = 0.0
    else:
        ptr, idx, val, d = g.ptr, g.idx, g.val, g.d
        alpha2 = 2.0 * g.alpha
    Yn, pen = _k.update_y(ent.col_ptr, ent.col_rows, ent.col_vals, X, Y, float(eps), alpha2, ptr, idx, val, d)
    return Yn, (g.alpha * pen if alpha2 > 0 else 0.0)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.ones_like(num), where=den > 0)


# --------------------------------------------------------------------------- public ops


def init_factors(num_senders: int, num_receivers: int, K: int, seed: int) -> FactorMatrices:
    """Uniform entries on (0, 0.01]; strictly positive so multiplicative updates can move them."""
    if num_senders < 1 or num_receivers < 1 or K < 1:
        raise ValueError("counts and K must be >= 1")
    rng = np.random.default_rng(seed)
    X = INIT_SCALE * (1.0 - rng.random((num_senders, K)))
    Y = INIT_SCALE * (1.0 - rng.random((num_receivers, K)))
    return FactorMatrices(X, Y)


def predict_entry(factors: FactorMatrices, i: int, j: int) -> float:
    U, S = factors.shape
    if not (0 <= i < U and 0 <= j < S):
        raise IndexError(f"entry ({i}, {j}) outside {U}x{S}")
    return float(factors.X[i] @ factors.Y[j])


def predict_known(factors: FactorMatrices, known: SparseKnownSet) -> np.ndarray:
    """Predictions for every known entry, in entry order."""
    _check_shapes(factors, known)
    return _Entries(known).predict(factors.X, factors.Y)


def _check_shapes(factors: FactorMatrices, known: SparseKnownSet):
    if factors.shape != known.shape:
        raise ValueError(f"factors span {factors.shape}, known set spans {known.shape}")


def objective_nlfa(factors: FactorMatrices, train: SparseKnownSet) -> float:
    """Squared error summed over known entries only."""
    _check_shapes(factors, train)
    return float(_Entries(train).sse(factors.X, factors.Y))


def objective_grnlfa(factors: FactorMatrices, train: SparseKnownSet, graph: CombinedGraph | None,
                     lambda_scaling: bool = True) -> float:
    """Known-entry squared error plus the graph penalty on Y.

    With ``lambda_scaling`` each receiver's penalty is charged once per known
    entry in its column (pair weights scaled by ``(|Λ(j)| + |Λ(l)|) / 2``).
    """
    base = objective_nlfa(factors, train)
    if graph is None:
        return base
    counts = train.col_counts if lambda_scaling else None
    return base + regularizer_value(graph, factors.Y, counts)


def slf_nmu_epoch(factors: FactorMatrices, train: SparseKnownSet, epsilon: float = 1e-8,
                  _entries: _Entries | None = None) -> FactorMatrices:
    _check_shapes(factors, train)
    ent = _entries or _Entries(train)
    Xn = _update_x(factors, ent, epsilon)[0]
    return FactorMatrices(Xn, _update_y(Xn, factors.Y, ent, epsilon)[0])


def slf_nmgru_epoch(factors: FactorMatrices, train: SparseKnownSet, graph: CombinedGraph | None,
                    epsilon: float = 1e-8, lambda_scaling: bool = True,
                    _entries: _Entries | None = None, _terms: _GraphTerms | None = None) -> FactorMatrices:
    """One graph-regularized epoch.

    ``y_jk <- y_jk (sum_i r_ij x_ik + 2a sum_l w_jl y_lk) / (sum_i rhat_ij x_ik + 2a d_j y_jk + eps)``
    where ``w`` are the effective pair weights and ``d`` their row sums.
    This is the positive/negative split of the exact gradient of
    :func:`objective_grnlfa`, so its fixed points satisfy KKT stationarity.
    Receivers with neither known entries nor graph neighbours keep their row.
    """
    _check_shapes(factors, train)
    ent = _entries or _Entries(train)
    terms = _terms or _GraphTerms(graph, train, lambda_scaling)
    Xn = _update_x(factors, ent, epsilon)[0]
    return FactorMatrices(Xn, _update_y(Xn, factors.Y, ent, epsilon, terms)[0])


def grad_Y_analytic(factors: FactorMatrices, train: SparseKnownSet, graph: CombinedGraph | None,
                    lambda_scaling: bool = True) -> np.ndarray:
    """Exact gradient of :func:`objective_grnlfa` with respect to Y."""
    _check_shapes(factors, train)
    ent = _Entries(train)
    G = 2.0 * _k.residual_col_sums(ent.col_ptr, ent.col_rows, ent.col_vals, factors.X, factors.Y)
    terms = _GraphTerms(graph, train, lambda_scaling)
    if terms.active:
        Y = factors.Y
        G += 4.0 * terms.alpha * (terms.d[:, None] * Y - terms.W @ Y)
    return G


def grad_X_analytic(factors: FactorMatrices, train: SparseKnownSet) -> np.ndarray:
    _check_shapes(factors, train)
    ent = _Entries(train)
    return 2.0 * _k.residual_row_sums(ent.row_ptr, ent.cols, ent.vals, factors.X, factors.Y)


def kkt_residual(factors: FactorMatrices, train: SparseKnownSet, graph: CombinedGraph | None,
                 lambda_scaling: bool = True) -> float:
    """``max |y_jk * dO/dy_jk|`` (complementary slackness on Y)."""
    return float(np.max(np.abs(factors.Y * grad_Y_analytic(factors, train, graph, lambda_scaling))))


def nmf_dense_epoch(W: np.ndarray, H: np.ndarray, R_full: np.ndarray,
                    epsilon: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Lee-Seung Frobenius updates, H first, then W."""
    if W.shape[0] != R_full.shape[0] or H.shape[1] != R_full.shape[1] or W.shape[1] != H.shape[0]:
        raise ValueError(f"shapes W{W.shape} H{H.shape} R{R_full.shape} do not compose")
    Hn = H * _ratio(W.T @ R_full, W.T @ W @ H + epsilon)
    Wn = W * _ratio(R_full @ Hn.T, W @ (Hn @ Hn.T) + epsilon)
    return Wn, Hn


def frobenius_objective(W: np.ndarray, H: np.ndarray, R_full: np.ndarray) -> float:
    E = R_full - W @ H
    return float(np.einsum("ij,ij->", E, E))


def rmse_mae(factors: FactorMatrices, known: SparseKnownSet) -> tuple[float, float]:
    if known.nnz == 0:
        raise ValueError("cannot score an empty evaluation set")
    _check_shapes(factors, known)
    sq, ab = _k.error_sums(known.rows, known.cols, known.vals, factors.X, factors.Y)
    return math.sqrt(sq / known.nnz), ab / known.nnz


def storage_footprint(train: SparseKnownSet, K: int, graph: CombinedGraph | None = None) -> dict[str, int]:
    """Count of resident records held by a training run (not bytes).

    Entry records and their indices grow with ``|Λ|``; factor rows grow with
    ``(|U| + |S|) K``; the graph adds its stored pairs.
    """
    U, S = train.shape
    return {
        "entries": train.nnz,
        "index": train.nnz + (U + 1) + (S + 1),
        "factors": (U + S) * K,
        "graph": 0 if graph is None else int(graph.weights.nnz) + S,
    }


# --------------------------------------------------------------------------- training loop


def stop_reason(previous: float, current: float, epoch: int, tolerance: float, max_epochs: int) -> str | None:
    """``converged`` once ``|O_d - O_{d-1}| < tolerance``; ``max-epochs`` at the cap."""
    if abs(current - previous) < tolerance:
        return "converged"
    if epoch >= max_epochs:
        return "max-epochs"
    return None


def iterate(step: Callable[[], None], objective: Callable[[], float], tolerance: float, max_epochs: int,
            on_epoch: Callable[[int, float, float], None] | None = None) -> tuple[float, list[float], str]:
    """Run ``step`` until :func:`stop_reason` fires.

    Returns the initial objective, the per-epoch trace and the reason.
    ``on_epoch(epoch, objective, step_seconds)`` is called after each epoch.
    """
    prev = objective()
    initial = prev
    trace: list[float] = []
    epoch = 0
    while True:
        epoch += 1
        t0 = time.perf_counter()
        step()
        cur = objective()
        dt = time.perf_counter() - t0
        trace.append(cur)
        if on_epoch is not None:
            on_epoch(epoch, cur, dt)
        reason = stop_reason(prev, cur, epoch, tolerance, max_epochs)
        if reason is not None:
            return initial, trace, reason
        prev = cur


def train(config: TrainConfig, split: DataSplit, graph: CombinedGraph | None = None,
          init: FactorMatrices | None = None) -> TrainResult:
    """Train the configured model on ``split.train_target``.

    Validation RMSE/MAE are tracked each epoch; the epochs with the lowest of
    each are kept with a copy of their factors. An empty validation slice
    disables tracking and the final epoch stands in as best.
    """
    config.validate()
    target = split.train_target
    if target.nnz == 0:
        raise ValueError("empty training set")
    if config.model == "grnlfa" and config.alpha > 0:
        if graph is None:
            raise ValueError("grnlfa with alpha > 0 needs a combined graph")
        if graph.alpha != config.alpha:
            raise ValueError(f"graph alpha {graph.alpha} != config alpha {config.alpha}")
    elif graph is not None and config.model != "grnlfa":
        raise ValueError(f"model {config.model} takes no graph")
    if config.model == "grnlfa" and config.alpha == 0:
        graph = None

    U, S = target.shape
    f = init.copy() if init is not None else init_factors(U, S, config.K, config.seed)
    eps = config.epsilon
    ent = _Entries(target)
    state = {"f": f}

    if config.model == "nmf-dense":
        R = target.to_dense()
        dense = {"W": f.X.copy(), "H": f.Y.T.copy()}

        def step():
            dense["W"], dense["H"] = nmf_dense_epoch(dense["W"], dense["H"], R, eps)
            state["f"] = FactorMatrices(dense["W"], np.ascontiguousarray(dense["H"].T))

        def objective():
            return frobenius_objective(dense["W"], dense["H"], R)
    else:
        # Each update pass yields the objective of its input state, so the
        # objective after epoch n falls out of computing epoch n+1. That
        # extra update is kept for the next step and dropped at the stop.
        terms = _GraphTerms(graph if config.model == "grnlfa" else None, target, config.lambda_scaling)
        pending: dict[str, FactorMatrices] = {}

        def advance(cur: FactorMatrices) -> tuple[FactorMatrices, float]:
            Xn, sse = _update_x(cur, ent, eps)
            Yn, pen = _update_y(Xn, cur.Y, ent, eps, terms)
            return FactorMatrices(Xn, Yn), sse + pen

        def step():
            nxt = pending.pop("f", None)
            state["f"] = nxt if nxt is not None else advance(state["f"])[0]

        def objective():
            pending["f"], obj = advance(state["f"])
            return obj

    val = split.validation_slice.known
    track = val.nnz > 0
    vtrace: list[tuple[float, float]] = []
    times: list[float] = []
    best: dict[str, BestEpoch] = {}

    clock = [0.0]
    verbose = logger.isEnabledFor(logging.DEBUG)

    def on_epoch(epoch, obj, dt):
        times.append(dt)
        clock[0] += dt
        elapsed = clock[0]
        cur = state["f"]
        if not track:
            vtrace.append((math.nan, math.nan))
            return
        rmse, mae = rmse_mae(cur, val)
        vtrace.append((rmse, mae))
        if verbose:
            logger.debug("%s epoch %d objective %.10g val_rmse %.6g val_mae %.6g",
                         config.model, epoch, obj, rmse, mae)
        # Every epoch yields fresh arrays, so holding a reference is safe; copies come at the end.
        if "rmse" not in best or rmse < best["rmse"].rmse:
            best["rmse"] = BestEpoch(epoch, rmse, mae, elapsed, cur)
        if "mae" not in best or mae < best["mae"].mae:
            best["mae"] = BestEpoch(epoch, rmse, mae, elapsed, cur)

    t0 = time.perf_counter()
    initial, trace, reason = iterate(step, objective, config.tolerance, config.max_epochs, on_epoch)
    wall = time.perf_counter() - t0
    final = state["f"]
    if not track:
        best = {key: BestEpoch(len(trace), math.nan, math.nan, sum(times), final) for key in ("rmse", "mae")}
    best = {key: replace(b, factors=b.factors.copy()) for key, b in best.items()}
    return TrainResult(final, len(trace), trace, vtrace, reason, wall, times, initial,
                       best["rmse"], best["mae"], config.model)
