"""Vectorized second-order cone arithmetic over a product of cones.

A vector in the product cone is stored as consecutive blocks ``(u0, u1)``
with ``u0`` scalar and ``u1`` of length ``q - 1``; ``q = 1`` blocks are
plain nonnegative rays.
"""

from __future__ import annotations

import numpy as np


class ConeSet:
    """Index bookkeeping for a product of second-order cones of sizes ``dims``."""

    def __init__(self, dims):
        self.dims = np.asarray(dims, dtype=np.int64)
        if np.any(self.dims < 1):
            raise ValueError("cone sizes must be >= 1")
        self.K = self.dims.size
        self.size = int(self.dims.sum())
        self.head = (np.cumsum(self.dims) - self.dims).astype(np.int64)
        cone_of = np.repeat(np.arange(self.K), self.dims)
        is_head = np.zeros(self.size, dtype=bool)
        is_head[self.head] = True
        self.tail = np.flatnonzero(~is_head)
        self.tail_cone = cone_of[self.tail]
        self.e = is_head.astype(float)

    def _tail_sum(self, v):
        return np.bincount(self.tail_cone, weights=v, minlength=self.K)

    def dot(self, u, v):
        """Per-cone inner products."""
        return u[self.head] * v[self.head] + self._tail_sum(u[self.tail] * v[self.tail])

    def jdet(self, u):
        """Per-cone ``u0^2 - ||u1||^2``."""
        # factored form avoids cancellation near the boundary
        h, t = u[self.head], self.tail_norm(u)
        return (h - t) * (h + t)

    def tail_norm(self, u):
        return np.sqrt(self._tail_sum(u[self.tail] ** 2))

    def circ(self, u, v):
        """Jordan product ``u o v``."""
        out = np.empty_like(u)
        out[self.head] = self.dot(u, v)
        tc = self.tail_cone
        out[self.tail] = (u[self.head][tc] * v[self.tail]
                          + v[self.head][tc] * u[self.tail])
        return out

    def inv_circ(self, lam, v):
        """Solve ``lam o x = v`` for ``x`` (``lam`` in the cone interior)."""
        l0 = lam[self.head]
        rho = self.jdet(lam)
        x = np.empty_like(v)
        x0 = (l0 * v[self.head] - self._tail_sum(lam[self.tail] * v[self.tail])) / rho
        x[self.head] = x0
        tc = self.tail_cone
        x[self.tail] = (v[self.tail] - x0[tc] * lam[self.tail]) / l0[tc]
        return x

    def margin(self, u):
        """Per-cone ``u0 - ||u1||`` (positive inside the interior)."""
        return u[self.head] - self.tail_norm(u)

    def max_step(self, u, d):
        """Largest ``a >= 0`` with ``u + a d`` in the cone (``inf`` if unbounded)."""
        if self.K == 0:
            return np.inf
        a = self.jdet(d)
        b = u[self.head] * d[self.head] - self._tail_sum(u[self.tail] * d[self.tail])
        c = self.jdet(u)
        disc = np.maximum(b * b - a * c, 0.0)
        bounded = (a < 0) | (b < 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(bounded, c / (-b + np.sqrt(disc)), np.inf)
        # rays (q == 1): u0 + a d0 >= 0
        ray = self.dims == 1
        if ray.any():
            u0, d0 = u[self.head][ray], d[self.head][ray]
            with np.errstate(divide="ignore"):
                steps[ray] = np.where(d0 < 0, -u0 / d0, np.inf)
        steps = np.where(np.isnan(steps), 0.0, steps)
        return float(max(steps.min(), 0.0))

    def shift_into_interior(self, u):
        """Add a multiple of the identity so that every block is strictly interior."""
        if self.K == 0:
            return u.copy()
        alpha = float(np.max(self.tail_norm(u) - u[self.head]))
        if alpha < 0:
            return u.copy()
        return u + (1.0 + alpha) * self.e


class NTScaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lam``.

    For each cone, ``W = eta * [[a, q^T], [q, I + q q^T / (1 + a)]]`` where
    ``(a, q)`` is the normalized scaling point (``a^2 - ||q||^2 = 1``).
    """

    def __init__(self, cones: ConeSet, s, z):
        self.cones = cones
        sj = np.sqrt(cones.jdet(s))
        zj = np.sqrt(cones.jdet(z))
        cone_of_tail = cones.tail_cone
        sb_h, zb_h = s[cones.head] / sj, z[cones.head] / zj
        sb_t, zb_t = s[cones.tail] / sj[cone_of_tail], z[cones.tail] / zj[cone_of_tail]
        gam = np.sqrt(0.5 * (1.0 + sb_h * zb_h
                             + cones._tail_sum(sb_t * zb_t)))
        self.a = (sb_h + zb_h) / (2.0 * gam)
        self.q = (sb_t - zb_t) / (2.0 * gam[cone_of_tail])
        self.eta = np.sqrt(sj / zj)
        self.lam = self.apply(z)

    def _apply(self, v, sign):
        c = self.cones
        tc = c.tail_cone
        v0 = v[c.head]
        qv = c._tail_sum(self.q * v[c.tail])
        out = np.empty_like(v)
        out[c.head] = self.a * v0 + sign * qv
        coef = sign * v0 + qv / (1.0 + self.a)
        out[c.tail] = v[c.tail] + coef[tc] * self.q
        return out

    def apply(self, v):
        """``W v``."""
        out = self._apply(v, 1.0)
        scale = np.repeat(self.eta, self.cones.dims)
        return out * scale

    def apply_inv(self, v):
        """``W^{-1} v``."""
        out = self._apply(v, -1.0)
        scale = np.repeat(1.0 / self.eta, self.cones.dims)
        return out * scale

    def wtilde(self, k):
        """Scaling point ``(a, q)`` of cone ``k``."""
        c = self.cones
        start = c.head[k]
        q = self.q[start - k:start - k + c.dims[k] - 1]
        return np.concatenate([[self.a[k]], q])

    def dense_square(self, k):
        """Dense ``W_k^2 = eta^2 (I + 2 w w^T - 2 e0 e0^T)``."""
        w = self.wtilde(k)
        M = np.eye(w.size) + 2.0 * np.outer(w, w)
        M[0, 0] -= 2.0
        return self.eta[k] ** 2 * M
