"""Scoring, experiment runners and the synthetic drift generator."""

from __future__ import annotations

import contextlib
import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .config import ExperimentConfig, SyntheticSpec
from .factorization import MODELS, FactorMatrices, TrainResult, rmse_mae, train
from .regularizer import history_graph
from .temporal_graph import (
    EdgeFormat,
    NodeIndex,
    Snapshot,
    SparseKnownSet,
    TemporalEdge,
    TemporalNetwork,
    build_network,
    read_edge_file,
    temporal_split,
)

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("model", "param", "value", "rmse_val", "mae_val", "rmse_test", "mae_test",
                  "round_rmse", "round_mae", "time_to_rmse_s", "time_to_mae_s")
CURVE_COLUMNS = ("epoch", "objective", "rmse_val", "mae_val", "epoch_time_s")


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    count: int
    slice: int | None = None


def score(factors: FactorMatrices, eval_set: SparseKnownSet, slice: int | None = None) -> MetricReport:
    rmse, mae = rmse_mae(factors, eval_set)
    return MetricReport(rmse, mae, eval_set.nnz, slice)


class ExperimentOutcome(NamedTuple):
    result: TrainResult
    validation: MetricReport | None
    test: MetricReport


@dataclass(frozen=True)
class ResultRow:
    model: str
    param: str
    value: float
    rmse_val: float
    mae_val: float
    rmse_test: float
    mae_test: float
    round_rmse: int
    round_mae: int
    time_to_rmse_s: float
    time_to_mae_s: float

    @classmethod
    def from_outcome(cls, model: str, param: str, value: float, out: ExperimentOutcome) -> "ResultRow":
        r = out.result
        return cls(model, param, value, r.best_rmse.rmse, r.best_mae.mae, out.test.rmse, out.test.mae,
                   r.best_rmse.epoch, r.best_mae.epoch, r.best_rmse.elapsed, r.best_mae.elapsed)


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    grid: tuple[float, ...]
    outcomes: tuple[ExperimentOutcome, ...]
    model: str = "grnlfa"

    @property
    def validation(self) -> list[MetricReport | None]:
        return [o.validation for o in self.outcomes]

    @property
    def test(self) -> list[MetricReport]:
        return [o.test for o in self.outcomes]

    @property
    def best_epochs(self) -> list[int]:
        return [o.result.best_rmse.epoch for o in self.outcomes]

    def rows(self) -> list[ResultRow]:
        return [ResultRow.from_outcome(self.model, self.parameter, v, o) for v, o in zip(self.grid, self.outcomes)]

    def best(self) -> tuple[float, ExperimentOutcome]:
        """Grid value with the lowest validation RMSE."""
        i = int(np.argmin([o.result.best_rmse.rmse for o in self.outcomes]))
        return self.grid[i], self.outcomes[i]


@dataclass(frozen=True)
class ComparisonResult:
    models: tuple[str, ...]
    outcomes: tuple[ExperimentOutcome, ...]
    theta: float
    split_checksum: str

    def rows(self) -> list[ResultRow]:
        return [ResultRow.from_outcome(m, "theta", self.theta, o) for m, o in zip(self.models, self.outcomes)]

    def __getitem__(self, model: str) -> ExperimentOutcome:
        return self.outcomes[self.models.index(model)]


# --------------------------------------------------------------------------- synthetic data


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> TemporalNetwork:
    """Planted-drift bipartite network.

    Sender factors are fixed and receiver factors take a Gaussian random walk
    of scale ``drift_rate`` per slice (clamped at 0). Each slice observes
    ``round(density |U||S|)`` distinct pairs drawn with probability
    proportional to the current affinity ``x_i . y_j``, so receivers that
    share senders also share latent structure. Observed values are
    ``x_i . y_j`` plus Gaussian noise, clamped at 0.
    """
    problems = spec.violations()
    if problems:
        raise ValueError("invalid synthetic spec: " + "; ".join(problems))
    rng = np.random.default_rng(spec.seed)
    U, S, K = spec.num_senders, spec.num_receivers, spec.K_true
    X = rng.random((U, K))
    Y = rng.random((S, K))
    m = min(max(int(round(spec.density * U * S)), 1), U * S)
    shape = (U, S)
    snaps = []
    for t in range(1, spec.T + 1):
        if t > 1 and spec.drift_rate > 0:
            Y = np.maximum(Y + spec.drift_rate * rng.standard_normal(Y.shape), 0.0)
        affinity = (X @ Y.T).ravel()
        total = affinity.sum()
        if m == U * S:
            pairs = np.arange(U * S)
        else:
            p = affinity / total if total > 0 else None
            pairs = rng.choice(U * S, size=m, replace=False, p=p)
        rows, cols = np.divmod(pairs, S)
        vals = affinity[pairs]
        if spec.noise > 0:
            vals = np.maximum(vals + spec.noise * rng.standard_normal(len(vals)), 0.0)
        snaps.append(Snapshot(t, SparseKnownSet(rows, cols, vals, shape)))
    index = NodeIndex({f"u{i}": i for i in range(U)}, {f"s{j}": j for j in range(S)})
    return TemporalNetwork(tuple(snaps), index)


def network_to_edges(network: TemporalNetwork) -> list[TemporalEdge]:
    senders = {i: name for name, i in network.index.sender_map.items()}
    receivers = {j: name for name, j in network.index.receiver_map.items()}
    return [TemporalEdge(senders[i], receivers[j], snap.t, r, snap.t)
            for snap in network.snapshots for i, j, r in snap.known.entries()]


# --------------------------------------------------------------------------- experiments


def _transform(name: str) -> Callable[[np.ndarray], np.ndarray]:
    return np.log1p if name == "log1p" else (lambda v: v)


def load_network_for(config: ExperimentConfig) -> TemporalNetwork:
    """Network named by ``config.input``, with the value transform applied."""
    if config.is_synthetic:
        net = generate_synthetic(SyntheticSpec.parse(config.input))
        return net.map_values(_transform(config.transform))
    header = {"auto": None, "yes": True, "no": False}[config.header]
    fmt = EdgeFormat(config.delimiter, header, config.explicit_slices)
    edges = read_edge_file(config.input, fmt)
    return build_network(edges, config.slices, explicit_slices=config.explicit_slices,
                         transform=config.transform)


@contextlib.contextmanager
def _determinism(enabled: bool):
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


def run_on_network(network: TemporalNetwork, config: ExperimentConfig, model: str | None = None,
                   theta: float | None = None, alpha: float | None = None) -> ExperimentOutcome:
    """Split, build the history graph if needed, train and score.

    The graph covers the training slices ``1..T-2``. Test metrics use the
    factors of the best validation-RMSE epoch.
    """
    model = model or config.model
    tc = config.train_config(model=model, theta=theta, alpha=alpha).validate()
    split = temporal_split(network, tc.theta, config.train_aggregation)
    graph = None
    if model == "grnlfa" and tc.alpha > 0:
        graph = history_graph(network, network.T - 2, tc.theta, tc.alpha, config.weight_scheme,
                              config.graph_neighbors)
    with _determinism(config.deterministic):
        result = train(tc, split, graph)
    test_set = split.test_slice.known
    if test_set.nnz == 0:
        raise ValueError(f"test slice {split.test_slice.t} is empty")
    val_set = split.validation_slice.known
    val = score(result.best_rmse.factors, val_set, split.validation_slice.t) if val_set.nnz else None
    test = score(result.best_rmse.factors, test_set, split.test_slice.t)
    return ExperimentOutcome(result, val, test)


def run_experiment(config: ExperimentConfig, network: TemporalNetwork | None = None) -> ExperimentOutcome:
    problems = config.violations(check_input=network is None)
    if network is not None:
        problems = [p for p in problems if not p.startswith(("missing input", "file input"))]
    if problems:
        raise ValueError("invalid experiment config: " + "; ".join(problems))
    net = network if network is not None else load_network_for(config)
    return run_on_network(net, config)


def _map(fn, items, workers: int, deterministic: bool):
    if workers > 1 and not deterministic and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def sweep_theta(config: ExperimentConfig, grid: Sequence[float] | None = None,
                network: TemporalNetwork | None = None) -> SweepResult:
    grid = tuple(config.theta_grid if grid is None else grid)
    if not grid:
        raise ValueError("theta grid must be non-empty")
    bad = [t for t in grid if not 0 < t <= 1]
    if bad:
        raise ValueError(f"theta values outside (0, 1]: {bad}")
    net = network if network is not None else load_network_for(config)
    outcomes = _map(lambda th: run_on_network(net, config, theta=th), list(grid),
                    config.threads, config.deterministic)
    return SweepResult("theta", grid, tuple(outcomes), config.model)


def compare_models(config: ExperimentConfig, models: Sequence[str] | None = None,
                   network: TemporalNetwork | None = None) -> ComparisonResult:
    """Run each model on one shared network, split and seed."""
    models = tuple(config.models if models is None else models)
    if len(models) < 2:
        raise ValueError("compare_models needs at least two models")
    unknown = [m for m in models if m not in MODELS]
    if unknown:
        raise ValueError(f"unknown model(s) {unknown}; expected {MODELS}")
    net = network if network is not None else load_network_for(config)
    checksum = temporal_split(net, config.theta, config.train_aggregation).train_target.checksum()
    outcomes = _map(lambda m: run_on_network(net, config, model=m), list(models),
                    config.threads, config.deterministic)
    return ComparisonResult(models, tuple(outcomes), config.theta, checksum)


# --------------------------------------------------------------------------- CSV output


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else format(float(v), ".10g")
    return str(v)


def results_csv(rows: Sequence[ResultRow], include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        vals = [getattr(row, c) for c in RESULT_COLUMNS]
        cells = [_fmt(v) for v in vals]
        if not include_timing:
            cells[-2:] = ["", ""]
        w.writerow(cells)
    return buf.getvalue()


def curves_csv(result: TrainResult, include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for n, (obj, (rmse, mae), dt) in enumerate(zip(result.objective_trace, result.validation_trace,
                                                   result.epoch_times), start=1):
        w.writerow([n, _fmt(obj), _fmt(rmse), _fmt(mae), _fmt(dt) if include_timing else ""])
    return buf.getvalue()
