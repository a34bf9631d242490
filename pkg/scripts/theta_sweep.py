"""Sweep the history decay theta for each model and print validation/test RMSE.

Usage: python3 scripts/theta_sweep.py [--input synthetic:seed=0] [--alpha 0.01]
"""

import argparse

from grnlfa.config import DEFAULT_THETA_GRID, ExperimentConfig
from grnlfa.evaluation import load_network_for, sweep_theta


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--input", default="synthetic:seed=0")
    ap.add_argument("--slices", type=int, default=None, help="slice count for file inputs")
    ap.add_argument("--alpha", type=float, default=0.01)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--models", default="nmf-dense,nlfa,grnlfa")
    args = ap.parse_args()

    base = ExperimentConfig(input=args.input, slices=args.slices, alpha=args.alpha, K=args.k)
    net = load_network_for(base)
    print(f"{'model':<10}{'theta':>9}{'rmse_val':>11}{'rmse_test':>11}{'mae_test':>10}{'epoch':>7}")
    for model in args.models.split(","):
        cfg = ExperimentConfig(**{**base.to_dict(), "model": model})
        sweep = sweep_theta(cfg, DEFAULT_THETA_GRID, network=net)
        for row in sweep.rows():
            print(f"{model:<10}{row.value:>9.5f}{row.rmse_val:>11.5f}{row.rmse_test:>11.5f}"
                  f"{row.mae_test:>10.5f}{row.round_rmse:>7d}")
        theta, best = sweep.best()
        print(f"{model:<10} best theta {theta} -> test RMSE {best.test.rmse:.5f}")


if __name__ == "__main__":
    main()
