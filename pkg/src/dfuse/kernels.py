"""Hot loops over grid cells, in numba and pure-numpy flavours.

Both flavours take a batch of *distinct* received bit vectors ``rows``
(shape (U, K), uint8) and exploit that the log-likelihood ratio at every
grid cell is affine in the bits::

    L[c] = base[c] + sum_{k : rows[u, k] = 1} wT[k, c]

so only the rows of ``wT`` whose bit is set are touched. Cells are ordered
position-major: ``c = i * n_powers + j``.

``grid_rule_stats`` returns columns (glrt, bayes, gb1, gb2).
``glod_stats`` returns the max over candidate positions of the normalized
score, with invalid (zero-Fisher) candidates skipped.

The dispatchers at the bottom pick the numba build unless
``DFUSE_DISABLE_NUMBA`` is set or numba is missing.
"""

import numpy as np
from scipy.special import logsumexp

from ._accel import HAS_NUMBA, njit

N_GRID_STATS = 4


# ---------------------------------------------------------------- numpy path

def _grid_rule_stats_exact(L, log_r, log_rbar):
    """Reference evaluation for one row, with per-statistic max shifts."""
    Lm = L.reshape(log_r.size, log_rbar.size)
    glrt = Lm.max()
    bayes = logsumexp(Lm + log_r[:, None] + log_rbar[None, :])
    gb1 = logsumexp(Lm + log_r[:, None], axis=0).max()
    gb2 = logsumexp(Lm + log_rbar[None, :], axis=1).max()
    return glrt, bayes, gb1, gb2


def grid_rule_stats_numpy(rows, base, wT, log_r, log_rbar, block_elems=1 << 22):
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    U = rows.shape[0]
    C = base.size
    out = np.empty((U, N_GRID_STATS))
    step = max(1, block_elems // max(C, 1))
    shape = (log_r.size, log_rbar.size)
    for start in range(0, U, step):
        blk = rows[start : start + step].astype(float)
        L = blk @ wT
        L += base
        L = L.reshape((-1,) + shape)
        out[start : start + step, 0] = L.max(axis=(1, 2))
        out[start : start + step, 1] = logsumexp(L + log_r[None, :, None] + log_rbar[None, None, :], axis=(1, 2))
        out[start : start + step, 2] = logsumexp(L + log_r[None, :, None], axis=1).max(axis=1)
        out[start : start + step, 3] = logsumexp(L + log_rbar[None, None, :], axis=2).max(axis=1)
    return out


def glod_stats_numpy(rows, num_base, dnu_g2T, inv_den, valid):
    rows = np.asarray(rows, dtype=float)
    num = rows @ dnu_g2T
    num += num_base
    vals = np.where(valid[None, :], num * inv_den[None, :], -np.inf)
    return vals.max(axis=1)


# ---------------------------------------------------------------- numba path

@njit(cache=True, nogil=True)
def _grid_rule_stats_kernel(rows, base, wT, r, rbar, out, fallback):
    U, K = rows.shape
    n_pos = r.size
    n_pow = rbar.size
    C = base.size
    L = np.empty(C)
    colsum = np.empty(n_pow)
    for u in range(U):
        for c in range(C):
            L[c] = base[c]
        for k in range(K):
            if rows[u, k] != 0:
                for c in range(C):
                    L[c] += wT[k, c]
        M = L[0]
        for c in range(1, C):
            if L[c] > M:
                M = L[c]
        for j in range(n_pow):
            colsum[j] = 0.0
        total = 0.0
        best_row = 0.0
        for i in range(n_pos):
            rowsum = 0.0
            off = i * n_pow
            for j in range(n_pow):
                e = np.exp(L[off + j] - M)
                rowsum += rbar[j] * e
                colsum[j] += r[i] * e
            total += r[i] * rowsum
            if rowsum > best_row:
                best_row = rowsum
        best_col = 0.0
        for j in range(n_pow):
            if colsum[j] > best_col:
                best_col = colsum[j]
        out[u, 0] = M
        if total > 0.0 and best_col > 0.0 and best_row > 0.0:
            out[u, 1] = M + np.log(total)
            out[u, 2] = M + np.log(best_col)
            out[u, 3] = M + np.log(best_row)
            fallback[u] = False
        else:
            # mass concentrated away from the max cell underflowed; redo exactly
            fallback[u] = True


@njit(cache=True, nogil=True)
def _glod_stats_kernel(rows, num_base, dnu_g2T, inv_den, valid, out):
    U, K = rows.shape
    n = num_base.size
    num = np.empty(n)
    for u in range(U):
        for i in range(n):
            num[i] = num_base[i]
        for k in range(K):
            if rows[u, k] != 0:
                for i in range(n):
                    num[i] += dnu_g2T[k, i]
        best = -np.inf
        for i in range(n):
            if valid[i]:
                v = num[i] * inv_den[i]
                if v > best:
                    best = v
        out[u] = best


def grid_rule_stats_numba(rows, base, wT, log_r, log_rbar):
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    out = np.empty((rows.shape[0], N_GRID_STATS))
    fallback = np.zeros(rows.shape[0], dtype=np.bool_)
    _grid_rule_stats_kernel(rows, base, wT, np.exp(log_r), np.exp(log_rbar), out, fallback)
    for u in np.flatnonzero(fallback):
        L = base + rows[u].astype(float) @ wT
        out[u] = _grid_rule_stats_exact(L, log_r, log_rbar)
    return out


def glod_stats_numba(rows, num_base, dnu_g2T, inv_den, valid):
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    out = np.empty(rows.shape[0])
    _glod_stats_kernel(rows, num_base, dnu_g2T, inv_den, valid, out)
    return out


if HAS_NUMBA:
    grid_rule_stats = grid_rule_stats_numba
    glod_stats = glod_stats_numba
else:
    grid_rule_stats = grid_rule_stats_numpy
    glod_stats = glod_stats_numpy

BACKEND = "numba" if HAS_NUMBA else "numpy"
