"""Assembly of the sampled data-driven distributionally robust OCP as an SOCP.

For every vertex of the sampled coefficient set, fresh coefficient variables
``g^j, u^j, y^j`` (``j = 0..L-1``, ``L = N n_w + 1``) are created and tied
to the data through the Hankel blocks; the feedforward ``u_bar``, the causal
disturbance-feedback gain ``K_w`` and the cost bound ``alpha`` are shared by
all vertices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ambiguity import VertexSet, lift_vertex
from .conic.program import ConicProgram
from .data import PE_RANK_TOL, HankelSystem
from .pce import sqrt_psd


class SpecError(ValueError):
    """Invalid OCP definition."""


def sigma(eps: float) -> float:
    """Chance-constraint back-off factor ``sqrt((1 - eps) / eps)``."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"risk level must lie in (0, 1), got {eps}")
    return float(np.sqrt((1.0 - eps) / eps))


def normalize_halfspaces(spaces, dim: int) -> np.ndarray:
    """Convert ``a^T v <= b`` entries (b > 0) to rows ``a / b`` with rhs 1.

    Entries may be ``{"a": [...], "b": float}`` or plain lists that are
    already normalized.
    """
    rows = []
    for item in spaces or []:
        if isinstance(item, dict):
            a = np.asarray(item["a"], dtype=float).ravel()
            b = float(item.get("b", 1.0))
        else:
            a, b = np.asarray(item, dtype=float).ravel(), 1.0
        if b <= 0:
            raise SpecError(f"half-space right-hand side must be positive, got {b}")
        if a.size != dim:
            raise SpecError(f"half-space has dimension {a.size}, expected {dim}")
        rows.append(a / b)
    return np.array(rows).reshape(len(rows), dim)


@dataclass(frozen=True)
class OcpSpec:
    """Horizon, weights, chance constraints and initial window of the OCP.

    Attributes:
        N: prediction horizon.
        T_ini: length of the initial window.
        Q: output weight (PSD, n_y x n_y).
        R: input weight (PD, n_u x n_u).
        input_halfspaces: (N_u, n_u) rows ``a`` of ``a^T u_k <= 1``.
        output_halfspaces: (N_y, n_y) rows ``a`` of ``a^T y_k <= 1``.
        eps_u, eps_y: admissible violation probabilities.
        init_u, init_y, init_w: initial window, each of shape (T_ini, n).
    """

    N: int
    T_ini: int
    Q: np.ndarray
    R: np.ndarray
    input_halfspaces: np.ndarray
    output_halfspaces: np.ndarray
    eps_u: float
    eps_y: float
    init_u: np.ndarray
    init_y: np.ndarray
    init_w: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        for name in ("init_u", "init_y", "init_w"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.shape[0] != self.T_ini:
                raise SpecError(f"{name} has {a.shape[0]} rows, expected T_ini={self.T_ini}")
            object.__setattr__(self, name, a)
        n_u, n_y = R.shape[0], Q.shape[0]
        if self.init_u.shape[1] != n_u or self.init_y.shape[1] != n_y:
            raise SpecError("initial window dimensions do not match Q/R")
        object.__setattr__(self, "input_halfspaces",
                           np.asarray(self.input_halfspaces, dtype=float).reshape(-1, n_u))
        object.__setattr__(self, "output_halfspaces",
                           np.asarray(self.output_halfspaces, dtype=float).reshape(-1, n_y))
        if self.N < 1 or self.T_ini < 1:
            raise SpecError("N and T_ini must be >= 1")
        if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-12:
            raise SpecError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
            raise SpecError("R must be positive definite")
        for eps in (self.eps_u, self.eps_y):
            if not 0.0 < eps < 1.0:
                raise SpecError(f"risk levels must lie in (0, 1), got {eps}")

    @property
    def n_u(self) -> int:
        return self.R.shape[0]

    @property
    def n_y(self) -> int:
        return self.Q.shape[0]

    @property
    def n_w(self) -> int:
        return self.init_w.shape[1]

    @property
    def L(self) -> int:
        return self.N * self.n_w + 1

    @property
    def init_stack(self) -> np.ndarray:
        """``[u_p; y_p; w_p]`` flattened in Hankel row order."""
        return np.concatenate([self.init_u.ravel(), self.init_y.ravel(),
                               self.init_w.ravel()])

    def to_json(self) -> dict:
        return {
            "N": self.N, "T_ini": self.T_ini,
            "Q": self.Q.tolist(), "R": self.R.tolist(),
            "input_halfspaces": self.input_halfspaces.tolist(),
            "output_halfspaces": self.output_halfspaces.tolist(),
            "eps_u": self.eps_u, "eps_y": self.eps_y,
            "init_window": {"u": self.init_u.tolist(), "y": self.init_y.tolist(),
                            "w": self.init_w.tolist()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OcpSpec":
        try:
            Q = np.atleast_2d(np.asarray(obj["Q"], dtype=float))
            R = np.atleast_2d(np.asarray(obj["R"], dtype=float))
            win = obj["init_window"]
            return cls(
                N=int(obj["N"]), T_ini=int(obj["T_ini"]), Q=Q, R=R,
                input_halfspaces=normalize_halfspaces(obj.get("input_halfspaces"), R.shape[0]),
                output_halfspaces=normalize_halfspaces(obj.get("output_halfspaces"), Q.shape[0]),
                eps_u=float(obj.get("eps_u", 0.5)), eps_y=float(obj.get("eps_y", 0.5)),
                init_u=win["u"], init_y=win["y"], init_w=win["w"],
            )
        except KeyError as exc:
            raise SpecError(f"missing OCP spec key {exc}") from None

    @classmethod
    def load(cls, path) -> "OcpSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class Policy:
    """Affine causal disturbance feedback ``u = u_bar + K_w w``."""

    u_bar: np.ndarray
    K_w: np.ndarray
    alpha: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"u_bar": self.u_bar.tolist(), "K_w": self.K_w.tolist(),
                "alpha": self.alpha, **self.meta}

    @classmethod
    def from_json(cls, obj: dict) -> "Policy":
        meta = {k: v for k, v in obj.items() if k not in ("u_bar", "K_w", "alpha")}
        return cls(np.asarray(obj["u_bar"], dtype=float),
                   np.atleast_2d(np.asarray(obj["K_w"], dtype=float)),
                   float(obj["alpha"]), meta)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Policy":
        return cls.from_json(json.loads(Path(path).read_text()))


def feedback_pattern(N: int, n_u: int, n_w: int):
    """Row/column indices of the free (strictly block-lower) entries of ``K_w``."""
    rows, cols = [], []
    for k in range(1, N):
        for a in range(n_u):
            for i in range(k):
                for b in range(n_w):
                    rows.append(k * n_u + a)
                    cols.append(i * n_w + b)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


class _Builder:
    """Accumulates variables, equalities and cones in COO form."""

    def __init__(self):
        self.n = 0
        self.layout = {}
        self.eq_rows, self.eq_cols, self.eq_vals, self.b = [], [], [], []
        self.m = 0
        self.f_rows, self.f_cols, self.f_vals, self.g = [], [], [], []
        self.nf = 0
        self.h_rows, self.h_cols, self.h_vals, self.d = [], [], [], []
        self.cone_dims = []

    def var(self, name, size):
        idx = np.arange(self.n, self.n + size)
        self.layout[name] = (self.n, self.n + size)
        self.n += size
        return idx

    @staticmethod
    def _coo(terms, n_rows):
        rows, cols, vals = [], [], []
        for idx, M in terms:
            M = sp.coo_matrix(M)
            if M.shape != (n_rows, len(idx)):
                raise ValueError(f"term shape {M.shape} != ({n_rows}, {len(idx)})")
            rows.append(M.row)
            cols.append(np.asarray(idx)[M.col])
            vals.append(M.data)
        return rows, cols, vals

    def eq(self, terms, rhs):
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        r, c, v = self._coo(terms, rhs.size)
        self.eq_rows += [x + self.m for x in r]
        self.eq_cols += c
        self.eq_vals += v
        self.b.append(rhs)
        self.m += rhs.size

    def cone(self, f_terms, g, h_terms, d):
        """``||F x + g|| <= h^T x + d``; ``h_terms`` are ``(idx, row-vector)``."""
        g = np.atleast_1d(np.asarray(g, dtype=float))
        r, c, v = self._coo(f_terms, g.size)
        self.f_rows += [x + self.nf for x in r]
        self.f_cols += c
        self.f_vals += v
        self.g.append(g)
        self.nf += g.size
        k = len(self.cone_dims)
        for idx, vec in h_terms:
            vec = np.asarray(vec, dtype=float).ravel()
            self.h_rows.append(np.full(len(idx), k))
            self.h_cols.append(np.asarray(idx))
            self.h_vals.append(vec)
        self.d.append(float(d))
        self.cone_dims.append(g.size)

    def build(self, c, meta):
        cat = lambda xs, dt=float: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        n = self.n
        A = sp.csr_matrix((cat(self.eq_vals), (cat(self.eq_rows, int), cat(self.eq_cols, int))),
                          shape=(self.m, n))
        F = sp.csr_matrix((cat(self.f_vals), (cat(self.f_rows, int), cat(self.f_cols, int))),
                          shape=(self.nf, n))
        K = len(self.cone_dims)
        H = sp.csr_matrix((cat(self.h_vals), (cat(self.h_rows, int), cat(self.h_cols, int))),
                          shape=(K, n))
        return ConicProgram(c=c, A_eq=A, b_eq=cat(self.b), F=F, g=cat(self.g), H=H,
                            d=np.array(self.d), cone_dims=np.array(self.cone_dims),
                            layout=dict(self.layout), meta=meta)


def assemble(spec: OcpSpec, vertices: VertexSet, dynamics, meta=None) -> ConicProgram:
    """Shared assembly of policy, cost and chance constraints.

    ``dynamics(builder, v, j, w_col)`` creates the coefficient variables of
    vertex ``v``, coefficient ``j``, ties them to the system and returns the
    index arrays ``(u_idx, y_idx)``.
    """
    if len(vertices) == 0:
        raise ValueError("empty vertex set")
    N, n_u, n_y, n_w, L = spec.N, spec.n_u, spec.n_y, spec.n_w, spec.L
    B = _Builder()
    u_bar = B.var("u_bar", N * n_u)
    kr, kc = feedback_pattern(N, n_u, n_w)
    k_idx = B.var("K_w", kr.size)
    alpha = B.var("alpha", 1)

    Qh = sqrt_psd(spec.Q)
    Rh = sqrt_psd(spec.R)
    Qblk = sp.kron(sp.eye(N), sp.csr_matrix(Qh))
    Rblk = sp.kron(sp.eye(N), sp.csr_matrix(Rh))
    sig_u, sig_y = sigma(spec.eps_u), sigma(spec.eps_y)
    I_u = sp.eye(N * n_u)

    for v, W01 in enumerate(vertices):
        W01 = np.asarray(W01, dtype=float)
        if W01.shape != (n_w, n_w + 1):
            raise ValueError(f"vertex {v} has shape {W01.shape}, expected {(n_w, n_w + 1)}")
        Wseq = lift_vertex(W01, N)
        u_vars, y_vars = [], []
        for j in range(L):
            w_col = Wseq[:, j]
            u_idx, y_idx = dynamics(B, v, j, w_col)
            u_vars.append(u_idx)
            y_vars.append(y_idx)
            # u^j - K_w w^j (- u_bar if j == 0) = 0
            Kmat = sp.coo_matrix((w_col[kc], (kr, np.arange(kr.size))),
                                 shape=(N * n_u, kr.size))
            terms = [(u_idx, I_u), (k_idx, -Kmat)]
            if j == 0:
                terms.append((u_bar, -I_u))
            B.eq(terms, np.zeros(N * n_u))

        # cost epigraph: ||[2 Q^1/2 y; 2 R^1/2 u; alpha - 1]|| <= alpha + 1
        f_terms = []
        n_rows = (n_y + n_u) * N * L + 1
        row = 0
        for j in range(L):
            f_terms.append((y_vars[j], _pad_rows(2.0 * Qblk, row, n_rows)))
            row += N * n_y
        for j in range(L):
            f_terms.append((u_vars[j], _pad_rows(2.0 * Rblk, row, n_rows)))
            row += N * n_u
        f_terms.append((alpha, _pad_rows(sp.csr_matrix([[1.0]]), row, n_rows)))
        g = np.zeros(n_rows)
        g[-1] = -1.0
        B.cone(f_terms, g, [(alpha, [1.0])], 1.0)

        # chance constraints
        for vars_, dim, spaces, sig in ((u_vars, n_u, spec.input_halfspaces, sig_u),
                                        (y_vars, n_y, spec.output_halfspaces, sig_y)):
            for k in range(N):
                for a in spaces:
                    f_terms = []
                    for j in range(1, L):
                        M = _pad_rows(sp.csr_matrix(sig * a[None, :]), j - 1, L - 1)
                        f_terms.append((vars_[j][k * dim:(k + 1) * dim], M))
                    B.cone(f_terms, np.zeros(L - 1),
                           [(vars_[0][k * dim:(k + 1) * dim], -a)], 1.0)

    c = np.zeros(B.n)
    c[alpha] = 1.0
    base_meta = {"N": N, "T_ini": spec.T_ini, "n_u": n_u, "n_y": n_y, "n_w": n_w,
                 "L": L, "n_vertices": len(vertices)}
    base_meta.update(meta or {})
    return B.build(c, base_meta)


def _pad_rows(M, offset, n_rows):
    """Embed ``M`` at row ``offset`` of an ``n_rows``-row sparse matrix."""
    M = sp.coo_matrix(M)
    return sp.coo_matrix((M.data, (M.row + offset, M.col)), shape=(n_rows, M.shape[1]))


def range_basis(H: HankelSystem, rtol: float = PE_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of the stacked Hankel matrix.

    Rows are ordered past, future u, future y, future w. Trajectories are
    parametrized as ``basis @ g``, which spans the same set as the raw
    Hankel columns without their null space or dependent rows.
    """
    M = np.vstack([H.H_p, H.H_uf, H.H_yf, H.H_wf])
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(sv > rtol * sv[0])) if sv.size and sv[0] > 0 else 0
    return U[:, :r]


def build_ocp(H: HankelSystem, spec: OcpSpec, vertices: VertexSet,
              compress: bool = False) -> ConicProgram:
    """Sampled relaxation of the data-driven DR-OCP as a :class:`ConicProgram`.

    With ``compress`` the Hankel columns are replaced by an orthonormal basis
    of their span (same feasible trajectories, fewer and better scaled
    variables); by default each ``g`` has one entry per Hankel column.
    """
    n_u, n_y, n_w = H.dims
    if (H.N, H.T_ini) != (spec.N, spec.T_ini):
        raise ValueError(f"Hankel horizon/window {(H.N, H.T_ini)} != spec {(spec.N, spec.T_ini)}")
    if (n_u, n_y, n_w) != (spec.n_u, spec.n_y, spec.n_w):
        raise ValueError(f"Hankel dims {(n_u, n_y, n_w)} != spec dims "
                         f"{(spec.n_u, spec.n_y, spec.n_w)}")
    N = spec.N
    if compress:
        basis = range_basis(H)
    else:
        basis = np.vstack([H.H_p, H.H_uf, H.H_yf, H.H_wf])
    r = basis.shape[1]
    cuts = np.cumsum([H.H_p.shape[0], N * n_u, N * n_y])
    B_p, B_uf, B_yf, B_wf = (sp.csr_matrix(M) for M in np.split(basis, cuts))
    z_ini = spec.init_stack
    zero_p = np.zeros(B_p.shape[0])

    def dynamics(B, v, j, w_col):
        g = B.var(f"v{v}/g{j}", r)
        u = B.var(f"v{v}/u{j}", N * n_u)
        y = B.var(f"v{v}/y{j}", N * n_y)
        B.eq([(g, B_p)], z_ini if j == 0 else zero_p)
        B.eq([(g, B_uf), (u, -sp.eye(N * n_u))], np.zeros(N * n_u))
        B.eq([(g, B_yf), (y, -sp.eye(N * n_y))], np.zeros(N * n_y))
        B.eq([(g, B_wf)], w_col)
        return u, y

    return assemble(spec, vertices, dynamics, {"kind": "data-driven", "n_cols": H.n_cols, "g_size": r})


def decode_policy(x, P: ConicProgram) -> Policy:
    x = np.asarray(x, dtype=float)
    if x.size != P.n:
        raise ValueError(f"solution has {x.size} entries, program has {P.n}")
    meta = P.meta
    N, n_u, n_w = meta["N"], meta["n_u"], meta["n_w"]
    kr, kc = feedback_pattern(N, n_u, n_w)
    if P.layout["K_w"][1] - P.layout["K_w"][0] != kr.size:
        raise ValueError("layout does not match the feedback pattern")
    K = np.zeros((N * n_u, N * n_w))
    K[kr, kc] = x[P.block("K_w")]
    return Policy(x[P.block("u_bar")].copy(), K, float(x[P.block("alpha")][0]))


def encode_policy(policy: Policy, P: ConicProgram) -> np.ndarray:
    """Place a policy's free entries in an otherwise zero primal vector."""
    meta = P.meta
    kr, kc = feedback_pattern(meta["N"], meta["n_u"], meta["n_w"])
    x = np.zeros(P.n)
    x[P.block("u_bar")] = policy.u_bar
    x[P.block("K_w")] = policy.K_w[kr, kc]
    x[P.block("alpha")] = policy.alpha
    return x


def vertex_trajectories(x, P: ConicProgram, v: int):
    """Input and output coefficient matrices ``(N n_u x L)``, ``(N n_y x L)`` of vertex v."""
    L = P.meta["L"]
    U = np.column_stack([x[P.block(f"v{v}/u{j}")] for j in range(L)])
    Y = np.column_stack([x[P.block(f"v{v}/y{j}")] for j in range(L)])
    return U, Y


def expected_cost(U, Y, Q, R) -> float:
    """``sum_k sum_j ||y_k^j||_Q^2 + ||u_k^j||_R^2`` for coefficient matrices."""
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    n_y, n_u = Q.shape[0], R.shape[0]
    Yk = Y.reshape(-1, n_y, Y.shape[1])
    Uk = U.reshape(-1, n_u, U.shape[1])
    return float(np.einsum("kaj,ab,kbj->", Yk, Q, Yk) + np.einsum("kaj,ab,kbj->", Uk, R, Uk))


def evaluate_chance_margin(V, a, eps) -> float:
    """``a^T v0 + sigma(eps) ||a^T V[:, 1:]|| - 1``; nonpositive means feasible."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    a = np.asarray(a, dtype=float).ravel()
    return float(a @ V[:, 0] + sigma(eps) * np.linalg.norm(a @ V[:, 1:]) - 1.0)
