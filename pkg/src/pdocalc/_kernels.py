"""Hot loops with a numba path and a pure-numpy fallback.

Set ``PDOCALC_DISABLE_NUMBA=1`` before import to force the numpy path.
Both implementations are always importable under explicit names so the
benchmark and the tests can compare them.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("PDOCALC_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)


def contour_sum_numpy(nodes, weights, mu, power):
    """Return ``sum_j weights[j] / (nodes[j] - mu[n]) ** power`` for every ``n``."""
    out = np.zeros(mu.shape[0], dtype=np.complex128)
    # chunk over eigenvalues to bound the temporary at ~4M complex entries
    step = max(1, 4_000_000 // max(1, nodes.shape[0]))
    for start in range(0, mu.shape[0], step):
        block = mu[start : start + step]
        denom = nodes[None, :] - block[:, None]
        out[start : start + step] = (weights[None, :] / denom**power).sum(axis=1)
    return out


def commutator_levels_numpy(rows, cols, vals, f, max_k):
    """Entries of ``ad_F^k(B)`` for diagonal ``F = diag(f)``, ``k = 0..max_k``.

    ``B`` is given in COO form; the result has shape ``(max_k + 1, nnz)``.
    """
    diff = f[rows] - f[cols]
    out = np.empty((max_k + 1, vals.shape[0]), dtype=np.result_type(vals, diff))
    out[0] = vals
    for k in range(1, max_k + 1):
        out[k] = out[k - 1] * diff
    return out


if NUMBA_AVAILABLE:

    @njit(cache=False)
    def contour_sum_numba(nodes, weights, mu, power):
        n_mu = mu.shape[0]
        out = np.zeros(n_mu, dtype=np.complex128)
        for n in range(n_mu):
            acc = 0.0 + 0.0j
            m = mu[n]
            for j in range(nodes.shape[0]):
                r = 1.0 / (nodes[j] - m)
                p = r
                for _ in range(power - 1):
                    p *= r
                acc += weights[j] * p
            out[n] = acc
        return out

    @njit(cache=False)
    def _levels_real(rows, cols, vals, f, max_k):
        nnz = vals.shape[0]
        out = np.empty((max_k + 1, nnz), dtype=np.float64)
        diff = np.empty(nnz, dtype=np.float64)
        for e in range(nnz):
            diff[e] = f[rows[e]] - f[cols[e]]
            out[0, e] = vals[e]
        for k in range(1, max_k + 1):
            for e in range(nnz):
                out[k, e] = out[k - 1, e] * diff[e]
        return out

    @njit(cache=False)
    def _levels_complex(rows, cols, vals, f, max_k):
        nnz = vals.shape[0]
        out = np.empty((max_k + 1, nnz), dtype=np.complex128)
        diff = np.empty(nnz, dtype=np.float64)
        for e in range(nnz):
            diff[e] = f[rows[e]] - f[cols[e]]
            out[0, e] = vals[e]
        for k in range(1, max_k + 1):
            for e in range(nnz):
                out[k, e] = out[k - 1, e] * diff[e]
        return out

    def commutator_levels_numba(rows, cols, vals, f, max_k):
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        cols = np.ascontiguousarray(cols, dtype=np.int64)
        f = np.ascontiguousarray(f, dtype=np.float64)
        if np.iscomplexobj(vals):
            return _levels_complex(rows, cols, np.ascontiguousarray(vals, dtype=np.complex128), f, max_k)
        return _levels_real(rows, cols, np.ascontiguousarray(vals, dtype=np.float64), f, max_k)

else:  # pragma: no cover
    contour_sum_numba = None
    commutator_levels_numba = None


if USE_NUMBA:
    contour_sum = contour_sum_numba
    commutator_levels = commutator_levels_numba
else:
    contour_sum = contour_sum_numpy
    commutator_levels = commutator_levels_numpy


def backend():
    return "numba" if USE_NUMBA else "numpy"
