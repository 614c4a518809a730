"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public names (``route_leaves``, ``accumulate_rows`` ...) dispatch to one
backend according to :data:`hammock._accel.USE_NUMBA`.  Both variants are
importable under ``*_numba`` / ``*_numpy`` for tests and benchmarks.

All kernels add contributions in the same fixed order on both backends, so the
two paths agree bit for bit.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

if USE_NUMBA:
    from numba import prange
else:
    prange = range


# --------------------------------------------------------------------------
# tree routing
# --------------------------------------------------------------------------


@njit(parallel=True)
def route_leaves_numba(feature, threshold, left, right, roots, X):
    n = X.shape[0]
    n_trees = roots.shape[0]
    out = np.empty((n, n_trees), dtype=np.int64)
    for i in prange(n):
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = node
    return out


def route_leaves_numpy(feature, threshold, left, right, roots, X):
    n = X.shape[0]
    out = np.empty((n, roots.shape[0]), dtype=np.int64)
    rows = np.arange(n)
    for t, root in enumerate(roots):
        node = np.full(n, root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            cur = node[active]
            go_left = X[rows[active], feature[cur]] < threshold[cur]
            node[active] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        out[:, t] = node
    return out


# --------------------------------------------------------------------------
# ordered output accumulation: out = base + sum_j H[:, j] * W[j, :]
# --------------------------------------------------------------------------


@njit
def accumulate_rows_numba(H, W, base):
    n, m = H.shape
    k = W.shape[1]
    out = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        for c in range(k):
            out[i, c] = base[c]
        for j in range(m):
            h = H[i, j]
            for c in range(k):
                out[i, c] += h * W[j, c]
    return out


def accumulate_rows_numpy(H, W, base):
    n = H.shape[0]
    out = np.empty((n, W.shape[1]), dtype=np.float64)
    out[:] = base
    for j in range(H.shape[1]):
        out += H[:, j, None] * W[j]
    return out


# --------------------------------------------------------------------------
# one-hot input layer: gather-sum forward, scatter-add backward
# --------------------------------------------------------------------------


@njit
def onehot_matmul_numba(rows, W, bias):
    n, n_feat = rows.shape
    h = W.shape[1]
    out = np.empty((n, h), dtype=np.float64)
    for i in range(n):
        for u in range(h):
            out[i, u] = bias[u]
        for f in range(n_feat):
            r = rows[i, f]
            for u in range(h):
                out[i, u] += W[r, u]
    return out


def onehot_matmul_numpy(rows, W, bias):
    out = np.empty((rows.shape[0], W.shape[1]), dtype=np.float64)
    out[:] = bias
    for f in range(rows.shape[1]):
        out += W[rows[:, f]]
    return out


@njit
def onehot_grad_numba(rows, dout, width):
    n, n_feat = rows.shape
    h = dout.shape[1]
    grad = np.zeros((width, h), dtype=np.float64)
    for i in range(n):
        for f in range(n_feat):
            r = rows[i, f]
            for u in range(h):
                grad[r, u] += dout[i, u]
    return grad


def onehot_grad_numpy(rows, dout, width):
    grad = np.zeros((width, dout.shape[1]), dtype=np.float64)
    for f in range(rows.shape[1]):
        np.add.at(grad, rows[:, f], dout)
    return grad


if USE_NUMBA:
    route_leaves = route_leaves_numba
    accumulate_rows = accumulate_rows_numba
    onehot_matmul = onehot_matmul_numba
    onehot_grad = onehot_grad_numba
else:
    route_leaves = route_leaves_numpy
    accumulate_rows = accumulate_rows_numpy
    onehot_matmul = onehot_matmul_numpy
    onehot_grad = onehot_grad_numpy
