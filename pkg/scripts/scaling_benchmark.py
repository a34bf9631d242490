"""Per-epoch cost of the sparse graph-regularized update against |Lambda| and K.

Also times one sparse epoch against one dense multiplicative NMF epoch on a
200x200 matrix at 5% density.

Usage: python3 scripts/scaling_benchmark.py [--size 1000] [--reps 5]
"""

import argparse
import statistics
import time

import numpy as np
import scipy.sparse as sp

from grnlfa.factorization import _Entries, _GraphTerms, init_factors, nmf_dense_epoch, slf_nmgru_epoch
from grnlfa.regularizer import ReceiverGraph, combine_graphs
from grnlfa.temporal_graph import SparseKnownSet


def random_known(rng, U, S, n):
    rows, cols = np.divmod(rng.choice(U * S, n, replace=False), S)
    return SparseKnownSet(rows, cols, rng.random(n), (U, S))


def random_graph(S, degree=10):
    W = sp.random(S, S, density=degree / S, random_state=1)
    return combine_graphs([ReceiverGraph(1, sp.csr_matrix(W + W.T))], 0.5, 0.1)


def sparse_step(known, graph):
    # Precomputed index structures, as the training loop reuses them across epochs.
    ent, terms = _Entries(known), _GraphTerms(graph, known, True)
    return lambda f: slf_nmgru_epoch(f, known, graph, _entries=ent, _terms=terms)


def dense_step(R):
    return lambda f: nmf_dense_epoch(f[0], f[1], R)


def median_epoch(step, f, reps, block=10):
    f = step(f)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(block):
            f = step(f)
        times.append((time.perf_counter() - t0) / block)
    return statistics.median(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    n = args.size
    graph = random_graph(n)

    print(f"{'|Lambda|':>10}{'K':>6}{'ms/epoch':>11}")
    base = None
    for nnz, K in ((100 * n, 64), (200 * n, 64), (100 * n, 128)):
        known = random_known(rng, n, n, nnz)
        t = median_epoch(sparse_step(known, graph), init_factors(n, n, K, 0), args.reps)
        base = base or t
        print(f"{nnz:>10}{K:>6}{1e3 * t:>11.3f}   ratio {t / base:.2f}")

    known = random_known(rng, 200, 200, 2000)
    small = random_graph(200)
    f0 = init_factors(200, 200, 20, 0)
    ts = median_epoch(sparse_step(known, small), f0, args.reps)
    td = median_epoch(dense_step(known.to_dense()), (f0.X.copy(), f0.Y.T.copy()), args.reps)
    print(f"200x200 at 5%: sparse {1e3 * ts:.3f} ms vs dense {1e3 * td:.3f} ms per epoch")


if __name__ == "__main__":
    main()
