"""Sparse up-looking LDL^T with dynamic pivot regularization.

The fill-reducing ordering is taken from ``qdldl`` (AMD) once per sparsity
pattern; the numeric factorization is done here so that pivots of the wrong
sign or negligible size can be replaced by ``sign * delta`` while the
factorization runs.
"""

from __future__ import annotations

import numba
import numpy as np
import qdldl
import scipy.sparse as sp

UNUSED = 0
USED = 1


@numba.njit(cache=True)
def _etree(n, Ap, Ai, work, Lnz, etree):
    for i in range(n):
        work[i] = 0
        Lnz[i] = 0
        etree[i] = -1
    for j in range(n):
        work[j] = j
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i > j:
                return -1
            while work[i] != j:
                if etree[i] == -1:
                    etree[i] = j
                Lnz[i] += 1
                work[i] = j
                i = etree[i]
    total = 0
    for i in range(n):
        total += Lnz[i]
    return total


@numba.njit(cache=True)
def _factor(n, Ap, Ai, Ax, Lp, Li, Lx, D, Dinv, Lnz, etree, signs, eps, delta):
    y_markers = np.zeros(n, dtype=np.uint8)
    y_idx = np.empty(n, dtype=np.int64)
    elim = np.empty(n, dtype=np.int64)
    next_space = np.empty(n, dtype=np.int64)
    y_vals = np.zeros(n)
    Lp[0] = 0
    for i in range(n):
        Lp[i + 1] = Lp[i] + Lnz[i]
        next_space[i] = Lp[i]
        D[i] = 0.0
    n_dyn = 0
    for k in range(n):
        n_y = 0
        for p in range(Ap[k], Ap[k + 1]):
            b = Ai[p]
            if b == k:
                D[k] = Ax[p]
                continue
            y_vals[b] = Ax[p]
            nxt = b
            if y_markers[nxt] == UNUSED:
                y_markers[nxt] = USED
                elim[0] = nxt
                n_e = 1
                nxt = etree[b]
                while nxt != -1 and nxt < k:
                    if y_markers[nxt] == USED:
                        break
                    y_markers[nxt] = USED
                    elim[n_e] = nxt
                    n_e += 1
                    nxt = etree[nxt]
                while n_e > 0:
                    n_e -= 1
                    y_idx[n_y] = elim[n_e]
                    n_y += 1
        for t in range(n_y - 1, -1, -1):
            c = y_idx[t]
            pos = next_space[c]
            yc = y_vals[c]
            for j in range(Lp[c], pos):
                y_vals[Li[j]] -= Lx[j] * yc
            Li[pos] = k
            Lx[pos] = yc * Dinv[c]
            D[k] -= yc * Lx[pos]
            next_space[c] += 1
            y_vals[c] = 0.0
            y_markers[c] = UNUSED
        s = signs[k]
        if s != 0:
            if s * D[k] <= eps:
                D[k] = s * delta
                n_dyn += 1
        elif abs(D[k]) <= eps:
            D[k] = delta if D[k] >= 0 else -delta
            n_dyn += 1
        Dinv[k] = 1.0 / D[k]
    return n_dyn


@numba.njit(cache=True)
def _solve(n, Lp, Li, Lx, Dinv, x):
    for i in range(n):
        xi = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            x[Li[j]] -= Lx[j] * xi
    for i in range(n):
        x[i] *= Dinv[i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            acc -= Lx[j] * x[Li[j]]
        x[i] = acc


def amd_order(pattern: sp.csc_matrix, signs: np.ndarray) -> np.ndarray:
    """AMD permutation of a symmetric pattern (upper triangle given).

    A surrogate with unit diagonal of the given sign and tiny off-diagonal
    entries is factorized by ``qdldl`` purely to obtain its ordering.
    """
    U = sp.csc_matrix(pattern, copy=True)
    U.data = np.full(U.nnz, 1e-7)
    diag = np.where(signs < 0, -1.0, 1.0)
    U = sp.csc_matrix(sp.triu(U, k=1) + sp.diags(diag))
    return np.asarray(qdldl.Solver(U, upper=True).factors()[2], dtype=np.int64)


class SparseLDL:
    """Factorization with a fixed pattern and changing values.

    Args:
        pattern: upper-triangular CSC pattern (values ignored).
        signs: expected pivot sign per row (+1, -1, or 0 for unknown).
        eps, delta: dynamic regularization threshold and replacement.
    """

    def __init__(self, pattern: sp.csc_matrix, signs, eps: float = 1e-13,
                 delta: float = 2e-7):
        pattern = sp.csc_matrix(pattern)
        n = pattern.shape[0]
        self.n = n
        self.eps, self.delta = eps, delta
        signs = np.asarray(signs, dtype=np.int64)
        perm = amd_order(pattern, signs)
        pinv = np.empty(n, dtype=np.int64)
        pinv[perm] = np.arange(n)
        self.perm, self.pinv = perm, pinv
        coo = pattern.tocoo()
        r, c = pinv[coo.row], pinv[coo.col]
        rr, cc = np.minimum(r, c), np.maximum(r, c)
        tag = sp.csc_matrix((np.arange(1, coo.nnz + 1, dtype=float), (rr, cc)), shape=(n, n))
        tag.sort_indices()
        if tag.nnz != coo.nnz:
            raise ValueError("pattern has duplicate entries")
        self.Ap = tag.indptr.astype(np.int64)
        self.Ai = tag.indices.astype(np.int64)
        # value map: permuted position -> index into pattern.tocoo() data
        self._src = tag.data.astype(np.int64) - 1
        self._coo_order = coo
        self.signs = signs[perm]
        self.etree = np.empty(n, dtype=np.int64)
        self.Lnz = np.empty(n, dtype=np.int64)
        total = _etree(n, self.Ap, self.Ai, np.empty(n, dtype=np.int64), self.Lnz, self.etree)
        if total < 0:
            raise ValueError("pattern is not upper triangular after permutation")
        self.Lp = np.empty(n + 1, dtype=np.int64)
        self.Li = np.empty(total, dtype=np.int64)
        self.Lx = np.empty(total)
        self.D = np.empty(n)
        self.Dinv = np.empty(n)
        self.n_dynamic = 0

    def factor(self, coo_values: np.ndarray) -> int:
        """Factorize with values given in the pattern's COO order."""
        Ax = np.asarray(coo_values, dtype=float)[self._src]
        self.n_dynamic = _factor(self.n, self.Ap, self.Ai, Ax, self.Lp, self.Li, self.Lx,
                                 self.D, self.Dinv, self.Lnz, self.etree, self.signs,
                                 self.eps, self.delta)
        return self.n_dynamic

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.asarray(b, dtype=float)[self.perm].copy()
        _solve(self.n, self.Lp, self.Li, self.Lx, self.Dinv, x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out
