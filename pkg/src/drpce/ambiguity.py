"""Gelbrich ambiguity sets and their image in PCE coefficient space.

A Gelbrich ball around the empirical moments ``(m_bar, G_bar)`` maps, under
``[m | Psi(G)]``, onto the convex set of coefficient matrices ``W01`` with

    ||W01 - [m_bar | G_bar^{1/2}]||_F <= rho   and   G_bar^{1/2} W1 symmetric PSD.

The relaxed control problem replaces this set by a finite vertex set obtained
by rejection sampling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from . import pce

logger = logging.getLogger(__name__)

RADIUS_TOL = 1e-12
SYM_TOL = 1e-8
PSD_TOL = 1e-10
HULL_TOL = 1e-8


@dataclass(frozen=True)
class GelbrichSet:
    m_bar: np.ndarray
    G_bar: np.ndarray
    rho: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("radius must be nonnegative")
        if np.linalg.eigvalsh(self.G_bar).min() <= 0:
            raise ValueError("anchor covariance must be positive definite")

    def contains(self, m, G) -> bool:
        return pce.gelbrich_distance(m, G, self.m_bar, self.G_bar) <= self.rho

    def coefficient_set(self) -> "CoeffAmbiguity":
        return CoeffAmbiguity.from_moments(self.m_bar, self.G_bar, self.rho)


@dataclass(frozen=True)
class CoeffAmbiguity:
    """Coefficient ambiguity set centred at ``anchor = [m_bar | G_bar^{1/2}]``."""

    anchor: np.ndarray
    rho: float
    G_bar_half: np.ndarray

    @classmethod
    def from_moments(cls, m_bar, G_bar, rho) -> "CoeffAmbiguity":
        m_bar = np.atleast_1d(np.asarray(m_bar, dtype=float))
        G_bar = np.atleast_2d(np.asarray(G_bar, dtype=float))
        if np.linalg.eigvalsh(0.5 * (G_bar + G_bar.T)).min() <= 0:
            raise ValueError("anchor covariance must be positive definite")
        if rho < 0:
            raise ValueError("radius must be nonnegative")
        half = pce.sqrt_psd(G_bar)
        return cls(np.column_stack([m_bar, half]), float(rho), half)

    @property
    def n_w(self) -> int:
        return self.anchor.shape[0]

    @property
    def G_bar(self) -> np.ndarray:
        return self.G_bar_half @ self.G_bar_half

    def hull_basis(self) -> np.ndarray:
        """Frobenius-orthonormal basis of the linear directions spanned by the set.

        Mean directions are free; covariance-factor directions are restricted
        to ``G_bar^{-1/2} S`` with ``S`` symmetric, which keeps
        ``G_bar^{1/2} W1`` symmetric.
        """
        n = self.n_w
        inv_half = np.linalg.inv(self.G_bar_half)
        dirs = []
        for i in range(n):
            E = np.zeros((n, n + 1))
            E[i, 0] = 1.0
            dirs.append(E.ravel())
        sym = []
        for a in range(n):
            for b in range(a, n):
                S = np.zeros((n, n))
                S[a, b] = S[b, a] = 1.0
                E = np.zeros((n, n + 1))
                E[:, 1:] = inv_half @ S
                sym.append(E.ravel())
        Q, _ = np.linalg.qr(np.array(sym).T)
        basis = np.vstack([np.array(dirs), Q.T])
        return basis.reshape(-1, n, n + 1)


def membership(W01: np.ndarray, A: CoeffAmbiguity) -> bool:
    W01 = np.asarray(W01, dtype=float)
    if W01.shape != A.anchor.shape:
        raise ValueError(f"shape mismatch {W01.shape} vs {A.anchor.shape}")
    if pce.coeff_distance(W01, A.anchor) > A.rho + RADIUS_TOL:
        return False
    return pce.in_psi_image(W01[:, 1:], A.G_bar_half, SYM_TOL, PSD_TOL)


@dataclass
class VertexSet:
    vertices: list
    seed: int | None = None
    s: int = 1
    capped: bool = False
    draws: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("vertex set must be non-empty")

    @property
    def retained(self) -> int:
        return len(self.vertices)

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def to_json(self) -> dict:
        return {"seed": self.seed, "s": self.s, "retained": self.retained,
                "vertices": [np.asarray(v).tolist() for v in self.vertices]}

    @classmethod
    def from_json(cls, obj: dict) -> "VertexSet":
        verts = [np.asarray(v, dtype=float) for v in obj["vertices"]]
        return cls(verts, seed=obj.get("seed"), s=int(obj.get("s", len(verts))))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "VertexSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def sample_ambiguity(A: CoeffAmbiguity, s: int, seed: int,
                     batch: int | None = None) -> VertexSet:
    """Rejection-sample ``s`` members of ``A``, the anchor always first.

    Candidates are drawn uniformly from the cube ``[-rho, rho]^d`` in the
    orthonormal coordinates of :meth:`CoeffAmbiguity.hull_basis`; the cube
    contains the Frobenius ball. At most ``1000 * s`` raw draws are made.
    """
    if s < 1:
        raise ValueError("sample count must be >= 1")
    vertices = [A.anchor.copy()]
    if A.rho == 0.0 or s == 1:
        return VertexSet(vertices, seed=seed, s=s)
    rng = np.random.default_rng(seed)
    basis = A.hull_basis()
    d = basis.shape[0]
    cap = 1000 * s
    draws = 0
    batch = batch or 256
    while len(vertices) < s and draws < cap:
        k = min(batch, cap - draws)
        coords = rng.uniform(-A.rho, A.rho, size=(k, d))
        draws += k
        pts = A.anchor[None] + np.tensordot(coords, basis, axes=1)
        for P in pts:
            if membership(P, A):
                vertices.append(P)
                if len(vertices) == s:
                    break
    capped = len(vertices) < s
    if capped:
        logger.warning("rejection sampling hit the cap of %d draws with %d/%d points",
                       cap, len(vertices), s)
    return VertexSet(vertices, seed=seed, s=s, capped=capped, draws=draws)


def _in_hull(p, others, tol=HULL_TOL):
    """Convex weights reproducing ``p`` from ``others`` (None if impossible)."""
    k = len(others)
    if k == 0:
        return None
    M = np.array([o.ravel() for o in others]).T
    A_eq = np.vstack([M, np.ones((1, k))])
    b_eq = np.concatenate([p.ravel(), [1.0]])
    res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k,
                  method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise RuntimeError(f"hull LP failed: {res.message}")
    lam = res.x
    if np.linalg.norm(M @ lam - p.ravel()) > tol * max(1.0, np.linalg.norm(p)):
        return None
    return lam


def prune_to_vertices(V: VertexSet) -> VertexSet:
    """Drop every point that is a convex combination of the remaining ones."""
    keep = list(range(len(V.vertices)))
    for i in range(len(V.vertices)):
        others = [V.vertices[j] for j in keep if j != i]
        if _in_hull(V.vertices[i], others) is not None:
            keep.remove(i)
    return VertexSet([V.vertices[j] for j in keep], seed=V.seed, s=V.s,
                     capped=V.capped, draws=V.draws, meta=dict(V.meta, pruned=True))


def lift_vertex(W01: np.ndarray, N: int) -> np.ndarray:
    """Coefficient matrix of the whole disturbance sequence for one vertex."""
    return pce.stack_disturbance(W01, N)


def radius_from_ratio(rho_bar: float, m_bar, G_bar, scale: str = "anchor") -> float:
    """Absolute radius from a relative one.

    Args:
        rho_bar: Radius relative to the size of the nominal point.
        m_bar: Nominal mean.
        G_bar: Nominal covariance.
        scale: ``"anchor"`` measures the nominal point in coefficient space,
            ``||[m_bar | G_bar^(1/2)]||_F``. ``"moments"`` uses
            ``||[m_bar | G_bar]||_F``, which for small covariances yields a
            radius an order of magnitude smaller.
    """
    if scale == "anchor":
        ref = np.column_stack([m_bar, pce.sqrt_psd(np.asarray(G_bar, dtype=float))])
    elif scale == "moments":
        ref = np.column_stack([m_bar, G_bar])
    else:
        raise ValueError(f"unknown radius scale {scale!r}")
    return float(rho_bar * np.linalg.norm(ref))
