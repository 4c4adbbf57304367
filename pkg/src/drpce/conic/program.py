"""Generic SOCP container and its sparse-triplet text serialization.

A program is::

    minimize    c^T x
    subject to  A_eq x = b_eq
                ||F_k x + g_k|| <= h_k^T x + d_k,   k = 0..K-1

The cone rows ``F_k`` of all cones are stored stacked in ``F``; ``H`` holds
one row ``h_k^T`` per cone and ``cone_dims[k]`` the number of rows of
``F_k`` (0 gives the scalar constraint ``h_k^T x + d_k >= 0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

FORMAT_TAG = "drpce-socp 1"


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    F: sp.csr_matrix
    g: np.ndarray
    H: sp.csr_matrix
    d: np.ndarray
    cone_dims: np.ndarray
    layout: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.c.size
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "b_eq", np.asarray(self.b_eq, dtype=float))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        object.__setattr__(self, "cone_dims", np.asarray(self.cone_dims, dtype=np.int64))
        for name in ("A_eq", "F", "H"):
            object.__setattr__(self, name, sp.csr_matrix(getattr(self, name)))
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"A_eq shape {self.A_eq.shape} inconsistent with "
                             f"b_eq ({self.b_eq.size}) and c ({n})")
        if self.F.shape != (self.g.size, n) or self.F.shape[0] != self.cone_dims.sum():
            raise ValueError("F, g and cone_dims are inconsistent")
        if self.H.shape != (self.cone_dims.size, n) or self.d.size != self.cone_dims.size:
            raise ValueError("H, d and cone_dims are inconsistent")
        self._check_layout()

    def _check_layout(self):
        if not self.layout:
            return
        spans = sorted(tuple(v) for v in self.layout.values())
        pos = 0
        for start, stop in spans:
            if start != pos or stop < start:
                raise ValueError(f"layout blocks do not tile the variable vector at {pos}")
            pos = stop
        if pos != self.n:
            raise ValueError(f"layout covers {pos} of {self.n} variables")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def n_cones(self) -> int:
        return self.cone_dims.size

    def block(self, name: str) -> slice:
        start, stop = self.layout[name]
        return slice(start, stop)

    @property
    def cone_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.cone_dims)]).astype(np.int64)

    @property
    def cones(self):
        """List of ``(F_k, g_k, h_k, d_k)`` tuples."""
        off = self.cone_offsets
        out = []
        for k in range(self.n_cones):
            rows = slice(off[k], off[k + 1])
            out.append((self.F[rows], self.g[rows],
                        self.H[k].toarray().ravel(), float(self.d[k])))
        return out

    def cone_violation(self, x) -> np.ndarray:
        """Per-cone ``max(0, ||F x + g|| - (h^T x + d))``."""
        r = self.F @ x + self.g
        cone_of_row = np.repeat(np.arange(self.n_cones), self.cone_dims)
        norms = np.sqrt(np.bincount(cone_of_row, weights=r ** 2, minlength=self.n_cones))
        rhs = self.H @ x + self.d
        return np.maximum(norms - rhs, 0.0)

    def standard_form(self):
        """Return ``(G, h, dims)`` with ``G x + s = h``, ``s`` in the product cone."""
        K = self.n_cones
        dims = self.cone_dims + 1
        head = (np.cumsum(dims) - dims).astype(np.int64)
        tail_rows = np.concatenate(
            [np.arange(head[k] + 1, head[k] + dims[k]) for k in range(K)]
        ).astype(np.int64) if K else np.zeros(0, dtype=np.int64)
        Hc = self.H.tocoo()
        Fc = self.F.tocoo()
        rows = np.concatenate([head[Hc.row], tail_rows[Fc.row]])
        cols = np.concatenate([Hc.col, Fc.col])
        vals = -np.concatenate([Hc.data, Fc.data])
        m = int(dims.sum())
        G = sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))
        h = np.zeros(m)
        h[head] = self.d
        h[tail_rows] = self.g
        return G, h, dims


def _write_vec(fh, name, v):
    nz = np.flatnonzero(v)
    fh.write(f"{name} {nz.size}\n")
    for i in nz:
        fh.write(f"{i} {float(v[i])!r}\n")


def _write_mat(fh, name, M):
    M = sp.coo_matrix(M)
    fh.write(f"{name} {M.nnz} {M.shape[0]} {M.shape[1]}\n")
    for i, j, v in zip(M.row, M.col, M.data):
        fh.write(f"{i} {j} {float(v)!r}\n")


def write_program(P: ConicProgram, path) -> None:
    """Serialize to the sparse-triplet text format (exact float round-trip)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORMAT_TAG + "\n")
        fh.write(f"dims {P.n} {P.b_eq.size} {P.n_cones}\n")
        _write_vec(fh, "c", P.c)
        _write_mat(fh, "A_eq", P.A_eq)
        _write_vec(fh, "b_eq", P.b_eq)
        fh.write(f"cone_dims {P.n_cones}\n")
        for p in P.cone_dims:
            fh.write(f"{int(p)}\n")
        _write_mat(fh, "F", P.F)
        _write_vec(fh, "g", P.g)
        _write_mat(fh, "H", P.H)
        _write_vec(fh, "d", P.d)
        layout = {k: [int(a), int(b)] for k, (a, b) in P.layout.items()}
        fh.write("layout " + json.dumps(layout, sort_keys=True) + "\n")
        fh.write("meta " + json.dumps(P.meta, sort_keys=True) + "\n")


def read_program(path) -> ConicProgram:
    with open(path, encoding="utf-8") as fh:
        lines = iter(fh.read().splitlines())

    def header(expected):
        parts = next(lines).split(" ", 1)
        if parts[0] != expected:
            raise ValueError(f"expected section {expected!r}, got {parts[0]!r}")
        return parts[1] if len(parts) > 1 else ""

    if next(lines).strip() != FORMAT_TAG:
        raise ValueError(f"{path}: not a {FORMAT_TAG} file")
    n, m, K = (int(t) for t in header("dims").split())

    def vec(name, size):
        count = int(header(name))
        v = np.zeros(size)
        for _ in range(count):
            i, val = next(lines).split()
            v[int(i)] = float(val)
        return v

    def mat(name):
        nnz, r, c = (int(t) for t in header(name).split())
        rows, cols, vals = np.zeros(nnz, int), np.zeros(nnz, int), np.zeros(nnz)
        for k in range(nnz):
            i, j, val = next(lines).split()
            rows[k], cols[k], vals[k] = int(i), int(j), float(val)
        return sp.csr_matrix((vals, (rows, cols)), shape=(r, c))

    c = vec("c", n)
    A_eq = mat("A_eq")
    b_eq = vec("b_eq", m)
    k_count = int(header("cone_dims"))
    cone_dims = np.array([int(next(lines)) for _ in range(k_count)], dtype=np.int64)
    F = mat("F")
    g = vec("g", F.shape[0])
    H = mat("H")
    d = vec("d", K)
    layout = {k: tuple(v) for k, v in json.loads(header("layout")).items()}
    meta = json.loads(header("meta"))
    return ConicProgram(c=c, A_eq=A_eq, b_eq=b_eq, F=F, g=g, H=H, d=d,
                        cone_dims=cone_dims, layout=layout, meta=meta)
