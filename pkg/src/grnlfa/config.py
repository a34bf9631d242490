"""Experiment configuration shared by the runners and the command line."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields

from .factorization import MODELS, TrainConfig
from .regularizer import WEIGHT_SCHEMES
from .temporal_graph import AGGREGATIONS, TRANSFORMS

COMMANDS = ("run", "sweep", "compare", "gen")
SYNTHETIC_PREFIX = "synthetic:"
DEFAULT_THETA_GRID = (0.5, 0.25, 0.125, 0.0625, 0.03125)
DELIMITERS = {"comma": ",", "tab": "\t"}


@dataclass(frozen=True)
class SyntheticSpec:
    num_senders: int = 20
    num_receivers: int = 20
    K_true: int = 3
    T: int = 6
    density: float = 0.3
    drift_rate: float = 0.05
    noise: float = 0.01
    seed: int = 0

    _ALIASES = {"senders": "num_senders", "receivers": "num_receivers", "k_true": "K_true",
                "k": "K_true", "t": "T", "slices": "T", "drift": "drift_rate"}

    def violations(self) -> list[str]:
        out = []
        if self.num_senders < 1 or self.num_receivers < 1:
            out.append("synthetic sender/receiver counts must be >= 1")
        if self.K_true < 1:
            out.append("synthetic K_true must be >= 1")
        if self.T < 3:
            out.append("synthetic T must be >= 3")
        if not 0 < self.density <= 1:
            out.append("synthetic density must lie in (0, 1]")
        if self.drift_rate < 0 or self.noise < 0:
            out.append("synthetic drift_rate and noise must be >= 0")
        return out

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        """Parse ``synthetic:senders=20,receivers=20,density=0.3,...``."""
        body = text[len(SYNTHETIC_PREFIX):] if text.startswith(SYNTHETIC_PREFIX) else text
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for part in filter(None, (p.strip() for p in body.split(","))):
            if "=" not in part:
                raise ValueError(f"synthetic spec item {part!r} is not key=value")
            key, value = (s.strip() for s in part.split("=", 1))
            name = cls._ALIASES.get(key.lower(), key)
            if name not in types:
                raise ValueError(f"unknown synthetic spec key {key!r}")
            kwargs[name] = float(value) if types[name] in ("float", float) else int(value)
        return cls(**kwargs)

    def format(self) -> str:
        items = ",".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return SYNTHETIC_PREFIX + items


def default_threads() -> int:
    raw = os.environ.get("GRNLFA_THREADS", "0")
    try:
        return max(int(raw), 0)
    except ValueError:
        return 0


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = "run"
    input: str = ""
    delimiter: str = ","
    header: str = "auto"
    slices: int | None = None
    explicit_slices: bool = False
    transform: str = "log1p"
    train_aggregation: str = "decayed-mean"
    weight_scheme: str = "inner-product"
    graph_neighbors: int = 5
    model: str = "grnlfa"
    models: tuple[str, ...] = ("nmf-dense", "nlfa", "grnlfa")
    K: int = 20
    alpha: float = 0.01
    theta: float = 0.5
    theta_grid: tuple[float, ...] = DEFAULT_THETA_GRID
    max_epochs: int = 1000
    tolerance: float = 1e-5
    seed: int = 42
    epsilon: float = 1e-8
    lambda_scaling: bool = True
    deterministic: bool = True
    threads: int = 0
    output: str = "grnlfa-out"

    @property
    def is_synthetic(self) -> bool:
        return self.input.startswith(SYNTHETIC_PREFIX)

    def train_config(self, model: str | None = None, theta: float | None = None,
                     alpha: float | None = None) -> TrainConfig:
        model = model or self.model
        if alpha is None:
            alpha = self.alpha if model == "grnlfa" else 0.0
        return TrainConfig(K=self.K, alpha=alpha, theta=self.theta if theta is None else theta,
                           max_epochs=self.max_epochs, tolerance=self.tolerance, seed=self.seed,
                           model=model, epsilon=self.epsilon, lambda_scaling=self.lambda_scaling)

    def violations(self, check_input: bool = True) -> list[str]:
        out = []
        if self.command not in COMMANDS:
            out.append(f"command must be one of {COMMANDS}")
        if not self.input:
            out.append("missing input (path or synthetic:<spec>)")
        elif self.is_synthetic:
            try:
                out.extend(SyntheticSpec.parse(self.input).violations())
            except (ValueError, TypeError) as exc:
                out.append(f"bad synthetic spec: {exc}")
        else:
            if self.command == "gen":
                out.append("gen takes a synthetic:<spec> input")
            elif check_input and not (os.path.isfile(self.input) and os.access(self.input, os.R_OK)):
                out.append(f"input file {self.input!r} is not readable")
            if self.slices is None and not self.explicit_slices:
                out.append("file input needs --slices T or --explicit-slices")
        if self.delimiter not in DELIMITERS.values():
            out.append("delimiter must be comma or tab")
        if self.header not in ("auto", "yes", "no"):
            out.append("header must be auto, yes or no")
        if self.slices is not None and self.slices < 3:
            out.append(f"slices must be >= 3, got {self.slices}")
        if self.transform not in TRANSFORMS:
            out.append(f"transform must be one of {TRANSFORMS}")
        if self.train_aggregation not in AGGREGATIONS:
            out.append(f"train aggregation must be one of {AGGREGATIONS}")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            out.append(f"weight scheme must be one of {tuple(WEIGHT_SCHEMES)}")
        if self.model not in MODELS:
            out.append(f"model must be one of {MODELS}, got {self.model!r}")
        bad = [m for m in self.models if m not in MODELS]
        if bad:
            out.append(f"unknown model(s) {bad}; expected {MODELS}")
        if self.command == "compare" and len(self.models) < 2:
            out.append("compare needs at least two models")
        if not self.theta_grid:
            out.append("theta grid must be non-empty")
        if any(not 0 < t <= 1 for t in self.theta_grid):
            out.append(f"every theta in the grid must lie in (0, 1], got {list(self.theta_grid)}")
        if self.graph_neighbors < 0:
            out.append(f"graph neighbours must be >= 0, got {self.graph_neighbors}")
        if self.threads < 0:
            out.append("threads must be >= 0")
        tc = self.train_config(model=self.model if self.model in MODELS else "grnlfa", alpha=self.alpha)
        out.extend(tc.violations())
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["models"] = list(self.models)
        d["theta_grid"] = list(self.theta_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("models", "theta_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True) + "\n"
