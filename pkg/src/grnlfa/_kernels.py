"""Compiled loops over known entries and graph pairs.

Entry arrays come in two orders: row-major (``row_ptr``, ``cols``, ``vals``)
and column-major (``col_ptr``, ``col_rows``, ``col_vals``). Every loop is
sequential, so results are bit-reproducible for a given input.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True, error_model="numpy")
def predict(rows, cols, X, Y):
    n = rows.shape[0]
    K = X.shape[1]
    out = np.empty(n)
    for e in range(n):
        i = rows[e]
        j = cols[e]
        s = 0.0
        for k in range(K):
            s += X[i, k] * Y[j, k]
        out[e] = s
    return out


@njit(cache=True, fastmath=True, error_model="numpy")
def sse(rows, cols, vals, X, Y):
    K = X.shape[1]
    total = 0.0
    for e in range(rows.shape[0]):
        i = rows[e]
        j = cols[e]
        s = 0.0
        for k in range(K):
            s += X[i, k] * Y[j, k]
        res = vals[e] - s
        total += res * res
    return total


@njit(cache=True, fastmath=True, error_model="numpy", inline="always")
def _accumulate(v, M, idx, vals, a, b, num, den):
    """Add ``sum_e r_e m_e`` to ``num`` and ``sum_e (v . m_e) m_e`` to ``den``.

    ``m_e = M[idx[e]]`` for ``e`` in ``a..b-1``. Returns ``sum_e (r_e - v . m_e)^2``.
    Entries go four at a time so the accumulators are touched once per group.
    """
    K = v.shape[0]
    total = 0.0
    e = a
    while e + 3 < b:
        m1 = M[idx[e]]
        m2 = M[idx[e + 1]]
        m3 = M[idx[e + 2]]
        m4 = M[idx[e + 3]]
        h1 = 0.0
        h2 = 0.0
        h3 = 0.0
        h4 = 0.0
        for k in range(K):
            h1 += v[k] * m1[k]
            h2 += v[k] * m2[k]
            h3 += v[k] * m3[k]
            h4 += v[k] * m4[k]
        r1 = vals[e]
        r2 = vals[e + 1]
        r3 = vals[e + 2]
        r4 = vals[e + 3]
        total += (r1 - h1) ** 2 + (r2 - h2) ** 2 + (r3 - h3) ** 2 + (r4 - h4) ** 2
        for k in range(K):
            num[k] += r1 * m1[k] + r2 * m2[k] + r3 * m3[k] + r4 * m4[k]
            den[k] += h1 * m1[k] + h2 * m2[k] + h3 * m3[k] + h4 * m4[k]
        e += 4
    while e < b:
        m1 = M[idx[e]]
        h1 = 0.0
        for k in range(K):
            h1 += v[k] * m1[k]
        r1 = vals[e]
        total += (r1 - h1) ** 2
        for k in range(K):
            num[k] += r1 * m1[k]
            den[k] += h1 * m1[k]
        e += 1
    return total


@njit(cache=True, fastmath=True, error_model="numpy", inline="always")
def _weighted_rows(M, idx, w, a, b, out):
    """``out = sum_p w_p M[idx[p]]`` for ``p`` in ``a..b-1``, four rows at a time."""
    K = out.shape[0]
    out[:] = 0.0
    p = a
    while p + 3 < b:
        m1 = M[idx[p]]
        m2 = M[idx[p + 1]]
        m3 = M[idx[p + 2]]
        m4 = M[idx[p + 3]]
        w1 = w[p]
        w2 = w[p + 1]
        w3 = w[p + 2]
        w4 = w[p + 3]
        for k in range(K):
            out[k] += w1 * m1[k] + w2 * m2[k] + w3 * m3[k] + w4 * m4[k]
        p += 4
    while p < b:
        m1 = M[idx[p]]
        w1 = w[p]
        for k in range(K):
            out[k] += w1 * m1[k]
        p += 1


@njit(cache=True, fastmath=True, error_model="numpy")
def error_sums(rows, cols, vals, X, Y):
    """``(sum res^2, sum |res|)`` over the entries, ``res = r - x_i . y_j``."""
    K = X.shape[1]
    sq = 0.0
    ab = 0.0
    for e in range(rows.shape[0]):
        xi = X[rows[e]]
        yj = Y[cols[e]]
        s = 0.0
        for k in range(K):
            s += xi[k] * yj[k]
        res = vals[e] - s
        sq += res * res
        ab += abs(res)
    return sq, ab


@njit(cache=True, fastmath=True, error_model="numpy")
def update_x(row_ptr, cols, vals, X, Y, eps):
    """``x_ik <- x_ik * sum_j y_jk r_ij / (sum_j y_jk rhat_ij + eps)``; empty rows kept.

    Also returns the squared error of the input ``(X, Y)``.
    """
    U, K = X.shape
    Xn = X.copy()
    num = np.empty(K)
    den = np.empty(K)
    total = 0.0
    for i in range(U):
        a = row_ptr[i]
        b = row_ptr[i + 1]
        if a == b:
            continue
        xi = X[i]
        num[:] = 0.0
        den[:] = 0.0
        total += _accumulate(xi, Y, cols, vals, a, b, num, den)
        xo = Xn[i]
        for k in range(K):
            d = den[k] + eps
            if d > 0.0:
                xo[k] = xi[k] * (num[k] / d)
    return Xn, total


@njit(cache=True, fastmath=True, error_model="numpy")
def update_y(col_ptr, col_rows, col_vals, X, Y, eps, alpha2, w_ptr, w_idx, w_val, degree):
    """Y phase; ``alpha2`` is the graph coefficient (0 disables the graph).

    Numerator gains ``alpha2 * sum_l w_jl y_lk`` and the denominator
    ``alpha2 * d_j y_jk``, both read from the input Y. Also returns
    ``sum_{j,l} w_jl ||y_j - y_l||^2`` of the input Y (0 without a graph).
    """
    S, K = Y.shape
    Yn = Y.copy()
    num = np.empty(K)
    den = np.empty(K)
    wy = np.empty(K)
    pen = 0.0
    for j in range(S):
        a = col_ptr[j]
        b = col_ptr[j + 1]
        has_graph = alpha2 > 0.0 and degree[j] > 0.0
        if a == b and not has_graph:
            continue
        yj = Y[j]
        num[:] = 0.0
        den[:] = 0.0
        _accumulate(yj, X, col_rows, col_vals, a, b, num, den)
        if has_graph:
            # sum_l w_jl ||y_j - y_l||^2 = d_j |y_j|^2 - 2 y_j . wy_j + sum_l w_jl |y_l|^2;
            # summed over j the two outer terms coincide for symmetric w.
            _weighted_rows(Y, w_idx, w_val, w_ptr[j], w_ptr[j + 1], wy)
            c = degree[j]
            for k in range(K):
                num[k] += alpha2 * wy[k]
                den[k] += alpha2 * c * yj[k]
                pen += 2.0 * yj[k] * (c * yj[k] - wy[k])
        yo = Yn[j]
        for k in range(K):
            d = den[k] + eps
            if d > 0.0:
                yo[k] = yj[k] * (num[k] / d)
    return Yn, pen


@njit(cache=True, fastmath=True, error_model="numpy")
def pair_penalty(w_ptr, w_idx, w_val, Y):
    """``sum_{j,l} w_jl ||y_j - y_l||^2`` over stored (ordered) pairs."""
    S, K = Y.shape
    total = 0.0
    for j in range(S):
        for p in range(w_ptr[j], w_ptr[j + 1]):
            l = w_idx[p]
            s = 0.0
            for k in range(K):
                diff = Y[j, k] - Y[l, k]
                s += diff * diff
            total += w_val[p] * s
    return total


@njit(cache=True, fastmath=True, error_model="numpy")
def residual_col_sums(col_ptr, col_rows, col_vals, X, Y):
    """``G[j, k] = sum_{i in Λ(j)} x_ik (rhat_ij - r_ij)``."""
    S, K = Y.shape
    G = np.zeros((S, K))
    for j in range(S):
        for e in range(col_ptr[j], col_ptr[j + 1]):
            i = col_rows[e]
            rh = 0.0
            for k in range(K):
                rh += X[i, k] * Y[j, k]
            res = rh - col_vals[e]
            for k in range(K):
                G[j, k] += res * X[i, k]
    return G


@njit(cache=True, fastmath=True, error_model="numpy")
def residual_row_sums(row_ptr, cols, vals, X, Y):
    U, K = X.shape
    G = np.zeros((U, K))
    for i in range(U):
        for e in range(row_ptr[i], row_ptr[i + 1]):
            j = cols[e]
            rh = 0.0
            for k in range(K):
                rh += X[i, k] * Y[j, k]
            res = rh - vals[e]
            for k in range(K):
                G[i, k] += res * Y[j, k]
    return G
