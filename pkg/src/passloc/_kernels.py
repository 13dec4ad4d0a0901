"""Compiled pairwise likelihood sums used by the particle messages."""

import math

import numba
import numpy as np

# IEEE special values are still needed for the -inf fallbacks
_FLAGS = {"nsz", "arcp", "contract", "afn", "reassoc"}
# exp(-z) is exactly 0.0 in double precision beyond this
_UNDERFLOW = 745.0
# sums below this lost precision to subnormals and are recomputed rescaled
_TINY = 1e-250


@numba.njit(cache=True, inline="always")
def _dist(dx, dy):
    return math.sqrt(dx * dx + dy * dy)


@numba.njit(cache=True, inline="always")
def _z(tx, ty, dt, qx, qy, R, inv2s2, j, k):
    r = R - dt[j] - _dist(tx[j] - qx[k], ty[j] - qy[k])
    return r * r * inv2s2


@numba.njit(cache=True, fastmath=_FLAGS)
def _rescaled_sum(tx, ty, dt, qx, qy, w, R, inv2s2, zmin, by_row, fixed):
    # log sum_k w_k exp(-z_k) along one row (by_row) or one column, shifted by the smallest z
    n = qx.shape[0] if by_row else tx.shape[0]
    acc = 0.0
    for k in range(n):
        if w[k] > 0.0:
            z = _z(tx, ty, dt, qx, qy, R, inv2s2, fixed, k) if by_row else \
                _z(tx, ty, dt, qx, qy, R, inv2s2, k, fixed)
            acc += w[k] * math.exp(zmin - z)
    if acc > _TINY:
        return math.log(acc) - zmin
    # the weights themselves underflow: fully in log space
    best = -np.inf
    for k in range(n):
        if w[k] > 0.0:
            z = _z(tx, ty, dt, qx, qy, R, inv2s2, fixed, k) if by_row else \
                _z(tx, ty, dt, qx, qy, R, inv2s2, k, fixed)
            best = max(best, math.log(w[k]) - z)
    if best == -np.inf:
        return best
    acc = 0.0
    for k in range(n):
        if w[k] > 0.0:
            z = _z(tx, ty, dt, qx, qy, R, inv2s2, fixed, k) if by_row else \
                _z(tx, ty, dt, qx, qy, R, inv2s2, k, fixed)
            acc += math.exp(math.log(w[k]) - z - best)
    return best + math.log(acc)


@numba.njit(cache=True, fastmath=_FLAGS)
def pair_log_sums(t, q, wt, wq, R, s2, do_rows, do_cols):
    """Weighted sums of the range likelihood over a target/receiver point grid.

    ``rows[j] = log sum_k wq[k] N(R; |t_j| + |t_j - q_k|, s2)`` and
    ``cols[k] = log sum_j wt[j] N(...)``.  Rows or columns whose plain sum is
    tiny are redone with a rescaled sum.
    """
    nt, nq = t.shape[0], q.shape[0]
    tx, ty, qx, qy = t[:, 0].copy(), t[:, 1].copy(), q[:, 0].copy(), q[:, 1].copy()
    inv2s2 = 0.5 / s2
    norm = -0.5 * math.log(2.0 * math.pi * s2)
    rows = np.zeros(nt)
    cols = np.zeros(nq)
    row_zmin = np.full(nt, np.inf)
    col_zmin = np.full(nq, np.inf)
    dt = np.empty(nt)
    for j in range(nt):
        dt[j] = _dist(tx[j], ty[j])
    for j in range(nt):
        acc = 0.0
        zr = np.inf
        w_j = wt[j]
        for k in range(nq):
            z = _z(tx, ty, dt, qx, qy, R, inv2s2, j, k)
            zr = min(zr, z)
            col_zmin[k] = min(col_zmin[k], z)
            if z < _UNDERFLOW:
                e = math.exp(-z)
                acc += wq[k] * e
                cols[k] += w_j * e
        rows[j] = acc
        row_zmin[j] = zr
    if do_rows:
        for j in range(nt):
            if rows[j] > _TINY:
                rows[j] = math.log(rows[j]) + norm
            else:
                rows[j] = _rescaled_sum(tx, ty, dt, qx, qy, wq, R, inv2s2, row_zmin[j], True, j) + norm
    if do_cols:
        for k in range(nq):
            if cols[k] > _TINY:
                cols[k] = math.log(cols[k]) + norm
            else:
                cols[k] = _rescaled_sum(tx, ty, dt, qx, qy, wt, R, inv2s2, col_zmin[k], False, k) + norm
    return rows, cols
