"""Command line: ``grnlfa {run,sweep,compare,gen}``.

Every run writes a self-describing directory::

    config.json   resolved configuration, tool version and seed
    results.csv   one row per trained model / grid point
    curves.csv    per-epoch objective and validation metrics
    factors.txt   best-validation-RMSE factors

Exit status is 0 on success, 2 for usage or configuration errors and 1 when
a run fails after the output directory was created (a ``FAILED`` marker is
left behind in that case).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import COMMANDS, DELIMITERS, ExperimentConfig, SyntheticSpec, default_threads
from .evaluation import (
    ExperimentOutcome,
    ResultRow,
    compare_models,
    curves_csv,
    generate_synthetic,
    load_network_for,
    network_to_edges,
    results_csv,
    run_on_network,
    sweep_theta,
)
from .factorization import MODELS, FactorMatrices
from .regularizer import WEIGHT_SCHEMES
from .temporal_graph import AGGREGATIONS, TRANSFORMS, write_edge_file

logger = logging.getLogger("grnlfa")

FACTORS_MAGIC = "grnlfa-factors v1"
ARTIFACTS = ("config.json", "results.csv", "curves.csv", "factors.txt")
FAILED_MARKER = "FAILED"


class UsageError(Exception):
    """Invalid command line or configuration; carries every problem found."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError([message])


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _on_off(text: str) -> bool:
    low = text.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")


def _delimiter(text: str) -> str:
    if text in DELIMITERS:
        return DELIMITERS[text]
    if text in DELIMITERS.values():
        return text
    raise argparse.ArgumentTypeError(f"delimiter must be one of {sorted(DELIMITERS)}")


def _common_options(p: argparse.ArgumentParser) -> None:
    # Defaults are None so explicit flags can be told apart from --config values.
    a = p.add_argument
    a("--config", metavar="FILE", help="JSON config echo to start from; explicit flags override it")
    a("--input", help="edge file or synthetic:<key=value,...>")
    a("--delimiter", type=_delimiter, help="comma or tab (default comma)")
    a("--header", choices=("auto", "yes", "no"), help="whether the edge file has a header row")
    a("--slices", type=int, metavar="T", help="number of equal-width time slices")
    a("--explicit-slices", dest="explicit_slices", action="store_const", const=True,
      help="take slices from the 5th column")
    a("--transform", choices=TRANSFORMS, help="value transform (default log1p)")
    a("--train-aggregation", dest="train_aggregation", choices=AGGREGATIONS,
      help="how training slices form one matrix (default decayed-mean)")
    a("--weight-scheme", dest="weight_scheme", choices=tuple(WEIGHT_SCHEMES),
      help="receiver similarity (default inner-product)")
    a("--graph-neighbors", dest="graph_neighbors", type=int, metavar="P",
      help="keep each receiver's P heaviest neighbours per slice, 0 keeps all (default 5)")
    a("--model", help=f"one of {', '.join(MODELS)} (default grnlfa)")
    a("--models", type=_str_list, help="comma-separated models for compare")
    a("--k", "-k", dest="K", type=int, help="latent dimension (default 20)")
    a("--alpha", type=float, help="graph regularization strength (default 0.01)")
    a("--theta", type=float, help="time decay in (0, 1] (default 0.5)")
    a("--theta-grid", dest="theta_grid", type=_float_list, help="comma-separated theta values for sweep")
    a("--max-epochs", dest="max_epochs", type=int, help="epoch cap (default 1000)")
    a("--tolerance", type=float, help="stop when the objective changes by less (default 1e-5)")
    a("--seed", type=int, help="factor initialization seed (default 42)")
    a("--epsilon", type=float, help="denominator guard (default 1e-8)")
    a("--lambda-scaling", dest="lambda_scaling", type=_on_off, metavar="on|off",
      help="scale pair weights by known-entry counts (default on)")
    det = p.add_mutually_exclusive_group()
    det.add_argument("--deterministic", dest="deterministic", action="store_const", const=True,
                     help="single-threaded, bit-reproducible runs (default)")
    det.add_argument("--no-deterministic", dest="deterministic", action="store_const", const=False)
    a("--threads", type=int, help="worker cap for sweeps and comparisons (default $GRNLFA_THREADS or 0)")
    a("--output", "-o", help="artifact directory (default grnlfa-out)")
    a("--verbose", "-v", action="store_true", help="log per-epoch progress")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grnlfa", description="Graph-regularized non-negative latent factor analysis.")
    parser.add_argument("--version", action="version", version=f"grnlfa {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{run,sweep,compare,gen}")
    helps = {
        "run": "train one model and score it",
        "sweep": "train grnlfa for each theta in a grid",
        "compare": "train several models on one split",
        "gen": "write a synthetic network as an edge file",
    }
    for name in COMMANDS:
        _common_options(sub.add_parser(name, help=helps[name], description=helps[name]))
    return parser


_NOT_FIELDS = ("config", "verbose", "command")


def parse_cli(argv: Sequence[str]) -> ExperimentConfig:
    """Resolve a config from ``argv``: defaults, then ``--config``, then explicit flags.

    Raises :class:`UsageError` listing every problem found.
    """
    return _parse(argv)[0]


def _parse(argv: Sequence[str]) -> tuple[ExperimentConfig, bool]:
    ns = build_parser().parse_args(list(argv))
    if ns.command is None:
        raise UsageError([f"missing command; expected one of {COMMANDS}"])
    values: dict = {"threads": default_threads()}
    problems: list[str] = []
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
            loaded.pop("version", None)
            loaded.pop("command", None)
            ExperimentConfig.from_dict(loaded)
            values.update(loaded)
        except (OSError, ValueError, TypeError) as exc:
            problems.append(f"cannot use config file {ns.config!r}: {exc}")
    values.update({k: v for k, v in vars(ns).items() if k not in _NOT_FIELDS and v is not None})
    values["command"] = ns.command
    try:
        config = ExperimentConfig.from_dict(values)
    except (ValueError, TypeError) as exc:
        raise UsageError(problems + [str(exc)]) from None
    problems.extend(config.violations())
    if problems:
        raise UsageError(problems)
    return config, bool(ns.verbose)


def config_to_args(config: ExperimentConfig) -> list[str]:
    """Argument vector that :func:`parse_cli` resolves back to ``config``."""
    delim = {v: k for k, v in DELIMITERS.items()}
    args = [config.command, "--input", config.input, "--delimiter", delim[config.delimiter],
            "--header", config.header, "--transform", config.transform,
            "--train-aggregation", config.train_aggregation, "--weight-scheme", config.weight_scheme,
            "--graph-neighbors", str(config.graph_neighbors), "--model", config.model,
            "--models", ",".join(config.models), "--k", str(config.K), "--alpha", repr(config.alpha),
            "--theta", repr(config.theta), "--theta-grid", ",".join(repr(t) for t in config.theta_grid),
            "--max-epochs", str(config.max_epochs), "--tolerance", repr(config.tolerance),
            "--seed", str(config.seed), "--epsilon", repr(config.epsilon),
            "--lambda-scaling", "on" if config.lambda_scaling else "off",
            "--deterministic" if config.deterministic else "--no-deterministic",
            "--threads", str(config.threads), "--output", config.output]
    if config.slices is not None:
        args += ["--slices", str(config.slices)]
    if config.explicit_slices:
        args.append("--explicit-slices")
    return args


# --------------------------------------------------------------------------- artifacts


def format_factors(factors: FactorMatrices) -> str:
    U, S = factors.shape
    lines = [f"{FACTORS_MAGIC} U={U} S={S} K={factors.K}"]
    for block in (factors.X, factors.Y):
        lines.extend(" ".join(repr(float(v)) for v in row) for row in block)
    return "\n".join(lines) + "\n"


def parse_factors(text: str) -> FactorMatrices:
    lines = text.splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 5 or " ".join(head[:2]) != FACTORS_MAGIC:
        raise ValueError("not a grnlfa factor dump")
    dims = dict(item.split("=", 1) for item in head[2:])
    U, S, K = int(dims["U"]), int(dims["S"]), int(dims["K"])
    rows = [[float(v) for v in line.split()] for line in lines[1:] if line.strip()]
    if len(rows) != U + S or any(len(r) != K for r in rows):
        raise ValueError(f"factor dump body does not match U={U} S={S} K={K}")
    arr = np.array(rows, dtype=np.float64).reshape(U + S, K)
    return FactorMatrices(arr[:U], arr[U:])


def summary_line(model: str, outcome: ExperimentOutcome) -> str:
    r = outcome.result
    return (f"model={model} rmse_test={outcome.test.rmse:.6g} mae_test={outcome.test.mae:.6g} "
            f"epochs={r.epochs_run} time={r.wall_time:.3f}")


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def _write_run(out: Path, config: ExperimentConfig, rows: list[ResultRow],
               chosen: ExperimentOutcome) -> None:
    timing = not config.deterministic
    _write(out, "results.csv", results_csv(rows, include_timing=timing))
    _write(out, "curves.csv", curves_csv(chosen.result, include_timing=timing))
    _write(out, "factors.txt", format_factors(chosen.result.best_rmse.factors))


def _execute(config: ExperimentConfig, out: Path) -> list[str]:
    """Run the configured command, write artifacts and return summary lines."""
    if config.command == "gen":
        net = generate_synthetic(SyntheticSpec.parse(config.input))
        write_edge_file(network_to_edges(net), out / "edges.csv", config.delimiter)
        return [f"wrote {net.num_entries} edges over T={net.T} slices to {out / 'edges.csv'}"]
    net = load_network_for(config)
    if config.command == "run":
        outcome = run_on_network(net, config)
        theta = config.theta
        rows = [ResultRow.from_outcome(config.model, "theta", theta, outcome)]
        _write_run(out, config, rows, outcome)
        return [summary_line(config.model, outcome)]
    if config.command == "sweep":
        sweep = sweep_theta(config, network=net)
        _, best = sweep.best()
        _write_run(out, config, sweep.rows(), best)
        return [summary_line(config.model, o) for o in sweep.outcomes]
    comp = compare_models(config, network=net)
    best = min(comp.outcomes, key=lambda o: o.result.best_rmse.rmse)
    _write_run(out, config, comp.rows(), best)
    return [summary_line(m, o) for m, o in zip(comp.models, comp.outcomes)]


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config, verbose = _parse(argv)
    except UsageError as exc:
        print("grnlfa: usage error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        print("run 'grnlfa <command> --help' for the flag list", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    out = Path(config.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"grnlfa: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 1
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    try:
        _write(out, "config.json", config.to_json(version=__version__))
        lines = _execute(config, out)
    except Exception as exc:  # every module error ends the run the same way
        logger.debug("run failed", exc_info=True)
        _write(out, FAILED_MARKER, f"{type(exc).__name__}: {exc}\n")
        print(f"grnlfa: {config.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    entry()
