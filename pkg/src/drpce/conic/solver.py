"""Primal-dual interior-point SOCP solver on the homogeneous self-dual embedding.

Standard form handled internally::

    minimize c^T x   s.t.  A x = b,  G x + s = h,  s in K
    maximize -b^T y - h^T z   s.t.  A^T y + G^T z + c = 0,  z in K

with ``K`` a product of second-order cones. Steps use Nesterov-Todd scaling
and Mehrotra predictor-corrector; infeasibility is detected from the
embedding's ``tau``/``kappa`` pair.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cones import ConeSet, NTScaling
from .kkt import KKTFactorizationError, KKTSystem
from .program import ConicProgram

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    ITER_LIMIT = "IterLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    regularization: float = 1e-7
    equilibrate: bool = True
    debug: bool = False
    verbose: bool = False

    def __post_init__(self):
        if min(self.tol_gap, self.tol_feas, self.regularization) <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray
    objective: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    s: np.ndarray | None = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _ruiz(A, G, cones: ConeSet, iters=25):
    n = A.shape[1]
    D = np.ones(n)
    EA = np.ones(A.shape[0])
    EG = np.ones(G.shape[0])
    M = sp.vstack([A, G]).tocsc()
    cone_of = np.repeat(np.arange(cones.K), cones.dims)
    for _ in range(iters):
        Ms = sp.diags(np.concatenate([EA, EG])) @ M @ sp.diags(D)
        Ms = abs(Ms)
        cn = Ms.max(axis=0).toarray().ravel()
        rn = Ms.max(axis=1).toarray().ravel()
        cn[cn == 0] = 1.0
        rn[rn == 0] = 1.0
        rA, rG = rn[:A.shape[0]], rn[A.shape[0]:]
        if cones.K:
            blk = np.zeros(cones.K)
            np.maximum.at(blk, cone_of, rG)
            blk[blk == 0] = 1.0
            rG = blk[cone_of]
        D /= np.sqrt(cn)
        EA /= np.sqrt(rA)
        EG /= np.sqrt(rG)
        if max(abs(1 - cn).max(initial=0), abs(1 - rn).max(initial=0)) < 1e-2:
            break
    return D, EA, EG


def solve_standard(c, A, b, G, h, dims, settings: SolverSettings | None = None,
                   ) -> SolveResult:
    """Solve a program already in ``(c, A, b, G, h, dims)`` standard form."""
    settings = settings or SolverSettings()
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    h = np.asarray(h, dtype=float)
    A = sp.csr_matrix(A)
    G = sp.csr_matrix(G)
    n, m = c.size, b.size
    cones = ConeSet(dims)
    if cones.size != G.shape[0]:
        raise ValueError("cone sizes do not match G")

    if G.shape[0] == 0:
        return _solve_linear(c, A, b, settings)

    if settings.equilibrate:
        D, EA, EG = _ruiz(A, G, cones)
    else:
        D, EA, EG = np.ones(n), np.ones(m), np.ones(G.shape[0])
    As = sp.csr_matrix(sp.diags(EA) @ A @ sp.diags(D))
    Gs = sp.csr_matrix(sp.diags(EG) @ G @ sp.diags(D))
    cs, bs, hs = D * c, EA * b, EG * h

    def unscale(x, y, z, s):
        return D * x, EA * y, EG * z, s / EG

    nb, nh, nc = np.linalg.norm(b), np.linalg.norm(h), np.linalg.norm(c)

    def metrics(x, y, z, s, tau, kappa):
        xu, yu, zu, su = unscale(x / tau, y / tau, z / tau, s / tau)
        pres = max(np.linalg.norm(A @ xu - b) / (1 + nb),
                   np.linalg.norm(G @ xu + su - h) / (1 + nh))
        dres = np.linalg.norm(A.T @ yu + G.T @ zu + c) / (1 + nc)
        pobj = float(c @ xu)
        dobj = float(-b @ yu - h @ zu)
        gap = float(su @ zu)
        return dict(pres=pres, dres=dres, pobj=pobj, dobj=dobj, gap=gap,
                    rel_gap=max(gap, abs(pobj - dobj)) / (1 + abs(pobj)))

    kkt = KKTSystem(As, Gs, cones, reg=settings.regularization, debug=settings.debug)

    def fail(msg, it, x=None):
        return SolveResult(Status.NUMERICAL_FAILURE, np.full(n, np.nan) if x is None else x,
                           np.nan, {}, it, message=msg)

    try:
        kkt.update(None)
        x, _, z0 = kkt.solve(np.zeros(n), bs, hs)
        s = cones.shift_into_interior(-z0)
        x_d, y, z = kkt.solve(-cs, np.zeros(m), np.zeros(G.shape[0]))
        z = cones.shift_into_interior(z)
    except KKTFactorizationError as exc:
        return fail(f"KKT factorization failed at start: {exc}", 0)
    tau, kappa = 1.0, 1.0
    nu = cones.K
    status = Status.ITER_LIMIT
    info = {}
    it = 0
    for it in range(settings.max_iter + 1):
        r1 = As.T @ y + Gs.T @ z + cs * tau
        r2 = -(As @ x) + bs * tau
        r3 = s + Gs @ x - hs * tau
        r4 = kappa + cs @ x + bs @ y + hs @ z
        mu = (s @ z + tau * kappa) / (nu + 1)

        info = metrics(x, y, z, s, tau, kappa)
        if settings.verbose:
            logger.info("it %3d pobj %+.6e dobj %+.6e pres %.1e dres %.1e gap %.1e tau %.1e kap %.1e",
                        it, info["pobj"], info["dobj"], info["pres"], info["dres"],
                        info["rel_gap"], tau, kappa)
        if (info["pres"] <= settings.tol_feas and info["dres"] <= settings.tol_feas
                and info["rel_gap"] <= settings.tol_gap):
            status = Status.OPTIMAL
            break
        # infeasibility certificates (unscaled)
        _, yu, zu, _ = unscale(x, y, z, s)
        xu = D * x
        su = s / EG
        btyhtz = b @ yu + h @ zu
        if btyhtz < 0:
            pinf = np.linalg.norm(A.T @ yu + G.T @ zu) / -btyhtz
            if pinf <= settings.tol_feas and tau < kappa * 1e-2 + 1e-12:
                info["pinf_res"] = pinf
                status = Status.PRIMAL_INFEASIBLE
                break
        ctx = c @ xu
        if ctx < 0:
            dinf = max(np.linalg.norm(A @ xu), np.linalg.norm(G @ xu + su)) / -ctx
            if dinf <= settings.tol_feas and tau < kappa * 1e-2 + 1e-12:
                info["dinf_res"] = dinf
                status = Status.DUAL_INFEASIBLE
                break
        if it == settings.max_iter:
            break

        try:
            W = NTScaling(cones, s, z)
            lam = W.lam
            kkt.update(W)
            x1, y1, z1 = kkt.solve(-cs, bs, hs)
        except (KKTFactorizationError, FloatingPointError, ValueError) as exc:
            return _finish(Status.NUMERICAL_FAILURE, x, y, z, s, tau, unscale, info, it,
                           (c, b, h), f"numerical failure: {exc}")
        denom_base = -kappa / tau + cs @ x1 + bs @ y1 + hs @ z1

        def direction(gamma, d_s, d_k):
            t = W.apply(cones.inv_circ(lam, d_s))
            x0, y0, z0_ = kkt.solve(-(1 - gamma) * r1, (1 - gamma) * r2,
                                    -(1 - gamma) * r3 - t)
            dtau = ((-(1 - gamma) * r4 - d_k / tau - (cs @ x0 + bs @ y0 + hs @ z0_))
                    / denom_base)
            dx = x0 + dtau * x1
            dy = y0 + dtau * y1
            dz = z0_ + dtau * z1
            # the linear row keeps r3 exact; W^2 dz cancels badly on degenerate cones
            ds = -(1 - gamma) * r3 - Gs @ dx + hs * dtau
            dkap = (d_k - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkap

        def step_len(dz, ds, dtau, dkap):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        try:
            aff = direction(0.0, -cones.circ(lam, lam), -kappa * tau)
            a_aff = min(1.0, step_len(aff[2], aff[3], aff[4], aff[5]))
            sigma = float(np.clip((1 - a_aff) ** 3, 0.0, 1.0))
            ds_s = W.apply_inv(aff[3])
            dz_s = W.apply(aff[2])
            d_s = -cones.circ(lam, lam) - cones.circ(ds_s, dz_s) + sigma * mu * cones.e
            d_k = -kappa * tau - aff[5] * aff[4] + sigma * mu
            dx, dy, dz, ds, dtau, dkap = direction(sigma, d_s, d_k)
        except (KKTFactorizationError, FloatingPointError) as exc:
            return _finish(Status.NUMERICAL_FAILURE, x, y, z, s, tau, unscale, info, it,
                           (c, b, h), f"numerical failure: {exc}")
        alpha = min(1.0, 0.99 * step_len(dz, ds, dtau, dkap))
        if not np.isfinite(alpha) or alpha < 1e-12:
            return _finish(Status.NUMERICAL_FAILURE, x, y, z, s, tau, unscale, info, it,
                           (c, b, h), "step length collapsed")
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

    return _finish(status, x, y, z, s, tau, unscale, info, it, (c, b, h), "")


def _solve_linear(c, A, b, settings: SolverSettings) -> SolveResult:
    """Cone-free programs are decided by least squares; the embedding has no
    barrier to separate ``tau`` from ``kappa`` there."""
    n, m = c.size, b.size
    tol = settings.tol_feas
    Ad = A.toarray()
    x = np.linalg.lstsq(Ad, b, rcond=None)[0] if m else np.zeros(n)
    r = b - Ad @ x
    if np.linalg.norm(r) > tol * (1 + np.linalg.norm(b)):
        y = -r / (r @ r)
        return SolveResult(Status.PRIMAL_INFEASIBLE, np.full(n, np.nan), np.inf,
                           {"pinf_res": float(np.linalg.norm(Ad.T @ y))}, 0, y=y,
                           z=np.zeros(0))
    y = np.linalg.lstsq(Ad.T, -c, rcond=None)[0] if m else np.zeros(0)
    dr = Ad.T @ y + c
    if np.linalg.norm(dr) > tol * (1 + np.linalg.norm(c)):
        ray = -dr / (dr @ dr)
        return SolveResult(Status.DUAL_INFEASIBLE, ray, -np.inf,
                           {"dinf_res": float(np.linalg.norm(Ad @ ray))}, 0, s=np.zeros(0))
    info = {"pres": float(np.linalg.norm(r)), "dres": float(np.linalg.norm(dr)),
            "pobj": float(c @ x), "dobj": float(-b @ y), "gap": 0.0, "rel_gap": 0.0}
    return SolveResult(Status.OPTIMAL, x, float(c @ x), info, 0, y=y, z=np.zeros(0),
                       s=np.zeros(0))


def _finish(status, x, y, z, s, tau, unscale, info, it, data, msg):
    c, b, h = data
    if status is Status.PRIMAL_INFEASIBLE:
        _, yu, zu, _ = unscale(x, y, z, s)
        scale = -(b @ yu + h @ zu)
        return SolveResult(status, np.full(x.size, np.nan), np.inf, info, it,
                           y=yu / scale, z=zu / scale, message=msg)
    if status is Status.DUAL_INFEASIBLE:
        xu, _, _, su = unscale(x, y, z, s)
        scale = -(c @ xu)
        return SolveResult(status, xu / scale, -np.inf, info, it, s=su / scale,
                           message=msg)
    xu, yu, zu, su = unscale(x / tau, y / tau, z / tau, s / tau)
    return SolveResult(status, xu, float(c @ xu), info, it, y=yu, z=zu, s=su, message=msg)


def solve(P: ConicProgram, settings: SolverSettings | None = None) -> SolveResult:
    """Solve a :class:`ConicProgram` with the built-in interior-point method.

    The returned ``z`` is ordered cone by cone as ``(z_k0, z_k1)`` where
    ``z_k0`` pairs with the scalar side ``h_k^T x + d_k``.
    """
    G, h, dims = P.standard_form()
    return solve_standard(P.c, P.A_eq, P.b_eq, G, h, dims, settings)
