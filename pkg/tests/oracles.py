"""Independent reference implementations, written as plain loops.

Nothing here imports the package's numerical code; tests compare the
vectorized and compiled paths against these.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def entries_dict(rows, cols, vals) -> dict[tuple[int, int], float]:
    out: dict[tuple[int, int], float] = {}
    for i, j, r in zip(rows, cols, vals):
        out[(int(i), int(j))] = out.get((int(i), int(j)), 0.0) + float(r)
    return out


def dot(a, b) -> float:
    return sum(float(x) * float(y) for x, y in zip(a, b))


def sse(X, Y, entries) -> float:
    return sum((r - dot(X[i], Y[j])) ** 2 for (i, j), r in entries.items())


def pair_weights(W, counts=None):
    """Objective pair weights: ``w_jl`` or ``w_jl (c_j + c_l) / 2``."""
    S = len(W)
    out = np.zeros((S, S))
    for j in range(S):
        for l in range(S):
            out[j, l] = W[j][l] if counts is None else W[j][l] * (counts[j] + counts[l]) / 2.0
    return out


def objective(X, Y, entries, W=None, alpha=0.0, counts=None) -> float:
    total = sse(X, Y, entries)
    if W is None or alpha == 0:
        return total
    O = pair_weights(W, counts)
    S = len(Y)
    for j in range(S):
        for l in range(S):
            total += alpha * O[j, l] * sum((Y[j][k] - Y[l][k]) ** 2 for k in range(len(Y[j])))
    return total


def fd_grad_Y(X, Y, entries, W=None, alpha=0.0, counts=None, h=1e-6):
    """Central finite differences of :func:`objective` with respect to Y."""
    Y = np.array(Y, dtype=np.float64)
    G = np.zeros_like(Y)
    for j in range(Y.shape[0]):
        for k in range(Y.shape[1]):
            Yp, Ym = Y.copy(), Y.copy()
            Yp[j, k] += h
            Ym[j, k] -= h
            G[j, k] = (objective(X, Yp, entries, W, alpha, counts)
                       - objective(X, Ym, entries, W, alpha, counts)) / (2 * h)
    return G


def nmu_x(X, Y, entries, eps):
    U, K = len(X), len(X[0])
    Xn = [list(map(float, row)) for row in X]
    for i in range(U):
        mine = [(j, r) for (a, j), r in entries.items() if a == i]
        if not mine:
            continue
        for k in range(K):
            num = sum(Y[j][k] * r for j, r in mine)
            den = sum(Y[j][k] * dot(X[i], Y[j]) for j, _ in mine) + eps
            if den > 0:
                Xn[i][k] = X[i][k] * num / den
    return np.array(Xn)


def gr_y(X, Y, entries, eps, W=None, alpha=0.0, counts=None):
    """Y phase: graph terms ``2 alpha sum_l o_jl y_lk`` and ``2 alpha d_j y_jk`` from the input Y."""
    S, K = len(Y), len(Y[0])
    O = pair_weights(W, counts) if W is not None and alpha > 0 else np.zeros((S, S))
    Yn = [list(map(float, row)) for row in Y]
    for j in range(S):
        mine = [(i, r) for (i, b), r in entries.items() if b == j]
        deg = sum(O[j])
        if not mine and deg == 0:
            continue
        for k in range(K):
            num = sum(r * X[i][k] for i, r in mine) + 2 * alpha * sum(O[j][l] * Y[l][k] for l in range(S))
            den = sum(dot(X[i], Y[j]) * X[i][k] for i, _ in mine) + 2 * alpha * deg * Y[j][k] + eps
            if den > 0:
                Yn[j][k] = Y[j][k] * num / den
    return np.array(Yn)


def inner_product_graph(rows, cols, vals, S):
    """``w_jl = sum_i r_ij r_il`` for ``j != l``."""
    entries = entries_dict(rows, cols, vals)
    W = np.zeros((S, S))
    senders = {i for i, _ in entries}
    for i in senders:
        for j in range(S):
            for l in range(S):
                if j != l:
                    W[j, l] += entries.get((i, j), 0.0) * entries.get((i, l), 0.0)
    return W


def bin_slices(timestamps, T):
    """Slice of each timestamp: smallest b with ``ts <= lo + b (hi - lo) / T``, exact fractions."""
    lo, hi = min(timestamps), max(timestamps)
    width = Fraction(hi - lo, T)
    out = []
    for ts in timestamps:
        b = 1
        while Fraction(ts - lo) > b * width:
            b += 1
        out.append(b)
    return out


def dense_nmf_step(W, H, R, eps):
    U, K = len(W), len(W[0])
    S = len(H[0])
    W = [list(map(float, r)) for r in W]
    H = [list(map(float, r)) for r in H]

    def mm(A, B):
        return [[sum(A[a][c] * B[c][b] for c in range(len(B))) for b in range(len(B[0]))] for a in range(len(A))]

    def tr(A):
        return [list(col) for col in zip(*A)]

    WtR, WtWH = mm(tr(W), R), mm(mm(tr(W), W), H)
    Hn = [[H[k][j] * WtR[k][j] / (WtWH[k][j] + eps) if WtWH[k][j] + eps > 0 else H[k][j]
           for j in range(S)] for k in range(K)]
    RHt, WHHt = mm(R, tr(Hn)), mm(W, mm(Hn, tr(Hn)))
    Wn = [[W[i][k] * RHt[i][k] / (WHHt[i][k] + eps) if WHHt[i][k] + eps > 0 else W[i][k]
           for k in range(K)] for i in range(U)]
    return np.array(Wn), np.array(Hn)
