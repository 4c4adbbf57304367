"""Quasi-definite KKT system of the interior-point method.

The scaled Newton system is::

    [ 0   A^T  G^T  ] [dx]   [rx]
    [ A   0    0    ] [dy] = [ry]
    [ G   0   -W^2  ] [dz]   [rz]

Small cones contribute dense ``-W_k^2`` blocks. For large cones the rank-2
structure ``W_k^2 = eta^2 (I + 2 w w^T - 2 e0 e0^T)`` is expanded with two
auxiliary rows so the block stays sparse (diagonal plus two columns).
The sparsity pattern is fixed at construction; each iteration only rewrites
numerical values and refactors (see :mod:`.ldl`).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .cones import ConeSet, NTScaling
from .ldl import SparseLDL

DENSE_MAX = 32
ACCEPT_RESIDUAL = 1e-10
KRYLOV_RESTART = 20


class KKTFactorizationError(RuntimeError):
    pass


class KKTSystem:
    def __init__(self, A: sp.csr_matrix, G: sp.csr_matrix, cones: ConeSet,
                 reg: float = 1e-7, refine_steps: int = 8, debug: bool = False):
        self.n = A.shape[1]
        self.m = A.shape[0]
        self.ms = G.shape[0]
        self.cones = cones
        self.reg = reg
        self.refine_steps = refine_steps
        self.debug = debug
        self.last_residual = 0.0

        n, m, oz = self.n, self.m, self.n + self.m
        self.big = np.flatnonzero(cones.dims > DENSE_MAX)
        self.small = np.flatnonzero(cones.dims <= DENSE_MAX)
        self.dim = oz + self.ms + 2 * self.big.size
        self.n_core = oz + self.ms

        rows, cols, true_vals, reg_vals = [], [], [], []

        def add(r, c, tv, rv=None):
            rows.append(np.asarray(r, dtype=np.int64))
            cols.append(np.asarray(c, dtype=np.int64))
            tv = np.broadcast_to(np.asarray(tv, dtype=float), rows[-1].shape)
            true_vals.append(tv)
            reg_vals.append(tv if rv is None else np.broadcast_to(rv, rows[-1].shape))

        idx_x = np.arange(n)
        add(idx_x, idx_x, 0.0, reg)
        Ac = A.tocoo()
        add(Ac.col, n + Ac.row, Ac.data)
        Gc = G.tocoo()
        add(Gc.col, oz + Gc.row, Gc.data)
        idx_y = n + np.arange(m)
        add(idx_y, idx_y, 0.0, -reg)
        n_static = sum(r.size for r in rows)

        # dense blocks grouped by cone size; upper triangles in row-major order
        self._groups = []
        pos = n_static
        for q in np.unique(cones.dims[self.small]):
            ks = self.small[cones.dims[self.small] == q]
            iu, ju = np.triu_indices(q)
            heads = cones.head[ks]
            r = (oz + heads[:, None] + iu[None, :]).ravel()
            c = (oz + heads[:, None] + ju[None, :]).ravel()
            add(r, c, 0.0)
            self._groups.append((ks, q, iu, ju, pos))
            pos += r.size
        # expanded large cones
        self._big_slots = []
        e_base = self.n_core
        for t, k in enumerate(self.big):
            q = cones.dims[k]
            z_idx = oz + cones.head[k] + np.arange(q)
            e1, e2 = e_base + 2 * t, e_base + 2 * t + 1
            start = pos
            add(z_idx, z_idx, 0.0)
            add(z_idx, np.full(q, e1), 0.0)
            add([z_idx[0]], [e2], 0.0)
            add([e1, e2], [e1, e2], np.array([1.0, -1.0]))
            self._big_slots.append((k, q, start))
            pos += 2 * q + 3

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self._true = np.concatenate(true_vals).astype(float)
        self._reg = np.concatenate(reg_vals).astype(float)
        tag = sp.csc_matrix((np.arange(1, rows.size + 1, dtype=float), (rows, cols)),
                            shape=(self.dim, self.dim))
        if tag.nnz != rows.size:
            raise AssertionError("duplicate KKT entries")
        self._perm = tag.data.astype(np.int64) - 1
        self._pattern = tag
        self._ldl = None
        # expected pivot signs; expanded large-cone rows have no fixed sign
        signs = np.zeros(self.dim, dtype=np.int64)
        signs[:n] = 1
        signs[n:oz] = -1
        for k in self.small:
            signs[oz + cones.head[k]:oz + cones.head[k] + cones.dims[k]] = -1
        self._signs = signs

    def update(self, W: NTScaling | None):
        """Write ``-W^2`` values (``W = I`` when ``None``) and refactor."""
        vals_t = self._true
        vals_r = self._reg
        for ks, q, iu, ju, pos in self._groups:
            if W is None:
                blk = np.broadcast_to(-np.eye(q)[iu, ju], (ks.size, iu.size))
            else:
                wt = np.empty((ks.size, q))
                wt[:, 0] = W.a[ks]
                if q > 1:
                    starts = self.cones.head[ks] - ks
                    wt[:, 1:] = W.q[starts[:, None] + np.arange(q - 1)[None, :]]
                blk = 2.0 * wt[:, iu] * wt[:, ju]
                blk = blk + (iu == ju)[None, :]
                blk[:, 0] -= 2.0
                blk *= -(W.eta[ks] ** 2)[:, None]
            sl = slice(pos, pos + ks.size * iu.size)
            vals_t[sl] = blk.ravel()
            vals_r[sl] = blk.ravel()
        for k, q, start in self._big_slots:
            if W is None:
                eta, wt = 1.0, np.zeros(q)
            else:
                eta, wt = W.eta[k], W.wtilde(k)
            seg = np.concatenate([np.full(q, -eta ** 2),
                                  np.sqrt(2.0) * eta * wt,
                                  [np.sqrt(2.0) * eta if W is not None else 0.0]])
            vals_t[start:start + 2 * q + 1] = seg
            vals_r[start:start + 2 * q + 1] = seg

        self._K_true = self._pattern.copy()
        self._K_true.data = vals_t[self._perm]
        self._diag_true = self._K_true.diagonal()
        if self._ldl is None:
            self._ldl = SparseLDL(self._pattern, self._signs)
        self._ldl.factor(vals_r[self._perm])
        if not np.all(np.isfinite(self._ldl.D)):
            raise KKTFactorizationError("non-finite pivots in LDL factorization")

    def _matvec(self, v):
        U = self._K_true
        return U @ v + U.T @ v - self._diag_true * v

    def solve(self, rx, ry, rz):
        rhs = np.zeros(self.dim)
        rhs[:self.n] = rx
        rhs[self.n:self.n + self.m] = ry
        rhs[self.n + self.m:self.n_core] = rz
        sol, self.last_residual = self._refined(rhs)
        if not np.all(np.isfinite(sol)):
            raise KKTFactorizationError("non-finite KKT solution")
        if self.debug and self.last_residual > 1e-8:
            raise AssertionError(f"KKT residual {self.last_residual:.2e} exceeds 1e-8")
        return (sol[:self.n], sol[self.n:self.n + self.m],
                sol[self.n + self.m:self.n_core])

    def _krylov(self, rhs, sol, res, norm_rhs):
        """GMRES on the true matrix, preconditioned by the regularized factor."""
        K = sla.LinearOperator((self.dim, self.dim), matvec=self._matvec)
        M = sla.LinearOperator((self.dim, self.dim), matvec=self._ldl.solve)
        corr, _ = sla.gmres(K, res, M=M, rtol=1e-13, atol=1e-14 * norm_rhs,
                            restart=KRYLOV_RESTART, maxiter=2)
        cand = sol + corr
        res_c = rhs - self._matvec(cand)
        if np.linalg.norm(res_c) < np.linalg.norm(res):
            return cand, res_c
        return sol, res

    def _refined(self, rhs):
        """Iterative refinement against the unregularized matrix."""
        solve = self._ldl.solve
        sol = solve(rhs)
        norm_rhs = max(np.linalg.norm(rhs), 1e-300)
        res = rhs - self._matvec(sol)
        for _ in range(self.refine_steps):
            if np.linalg.norm(res) <= 1e-13 * norm_rhs:
                break
            cand = sol + solve(res)
            res_c = rhs - self._matvec(cand)
            if not np.linalg.norm(res_c) < np.linalg.norm(res):
                break
            sol, res = cand, res_c
        if np.linalg.norm(res) > ACCEPT_RESIDUAL * norm_rhs and np.all(np.isfinite(sol)):
            sol, res = self._krylov(rhs, sol, res, norm_rhs)
        rel = float(np.linalg.norm(res) / norm_rhs)
        return sol, rel if np.isfinite(rel) else np.inf
