"""Independent verification of solver output, recomputed from the program data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .program import ConicProgram
from .solver import SolveResult, SolverSettings, Status

SLACK = 10.0


@dataclass
class CertificateReport:
    status: str
    checks: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks[k] <= self.limits[k] for k in self.checks)

    @property
    def failures(self) -> list[str]:
        return [k for k in self.checks if not self.checks[k] <= self.limits[k]]

    def to_json(self) -> dict:
        return {"status": self.status, "passed": self.passed,
                "checks": {k: float(v) for k, v in self.checks.items()},
                "limits": {k: float(v) for k, v in self.limits.items()}}


def _dual_cone_violation(z, dims) -> float:
    worst, pos = 0.0, 0
    for q in dims:
        blk = z[pos:pos + q]
        worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
        pos += q
    return max(worst, 0.0)


def check_certificate(P: ConicProgram, result: SolveResult,
                      settings: SolverSettings | None = None) -> CertificateReport:
    """Recompute residuals of ``result`` and flag any beyond 10x tolerance.

    Optimal results are checked for primal feasibility, dual feasibility
    (when duals are present) and the duality gap; infeasibility statuses
    are checked as Farkas-type rays. Other statuses fail by construction.
    """
    settings = settings or SolverSettings()
    G, h, dims = P.standard_form()
    A, b, c = P.A_eq, P.b_eq, P.c
    feas, gap_tol = SLACK * settings.tol_feas, SLACK * settings.tol_gap
    rep = CertificateReport(result.status.value)
    ck, lim = rep.checks, rep.limits
    if result.status is Status.OPTIMAL:
        x = np.asarray(result.x, dtype=float)
        if x.size != P.n or not np.all(np.isfinite(x)):
            ck["primal_vector"], lim["primal_vector"] = np.inf, 0.0
            return rep
        ck["eq_residual"] = np.linalg.norm(A @ x - b) / (1 + np.linalg.norm(b))
        scale = 1 + np.linalg.norm(h)
        ck["cone_violation"] = float(P.cone_violation(x).max(initial=0.0)) / scale
        lim["eq_residual"] = lim["cone_violation"] = feas
        if result.y is not None and result.z is not None:
            y, z = result.y, result.z
            ck["dual_residual"] = np.linalg.norm(A.T @ y + G.T @ z + c) / (1 + np.linalg.norm(c))
            ck["dual_cone_violation"] = _dual_cone_violation(z, dims) / (1 + np.linalg.norm(z))
            pobj, dobj = float(c @ x), float(-b @ y - h @ z)
            ck["rel_gap"] = abs(pobj - dobj) / (1 + abs(pobj))
            lim["dual_residual"] = lim["dual_cone_violation"] = feas
            lim["rel_gap"] = gap_tol
    elif result.status is Status.PRIMAL_INFEASIBLE:
        y, z = result.y, result.z
        if y is None or z is None:
            ck["certificate"], lim["certificate"] = np.inf, 0.0
            return rep
        denom = -(b @ y + h @ z)
        ck["ray_direction"] = 0.0 if denom > 0 else 1.0
        lim["ray_direction"] = 0.0
        ck["ray_residual"] = np.linalg.norm(A.T @ y + G.T @ z) / max(denom, 1e-300)
        ck["ray_cone_violation"] = _dual_cone_violation(z, dims) / max(denom, 1e-300)
        lim["ray_residual"] = lim["ray_cone_violation"] = feas
    elif result.status is Status.DUAL_INFEASIBLE:
        x = result.x
        denom = -(c @ x)
        ck["ray_direction"] = 0.0 if denom > 0 else 1.0
        lim["ray_direction"] = 0.0
        s = -(G @ x)  # G x + s = 0
        ck["ray_residual"] = np.linalg.norm(A @ x) / max(denom, 1e-300)
        ck["ray_cone_violation"] = _dual_cone_violation(s, dims) / max(denom, 1e-300)
        lim["ray_residual"] = lim["ray_cone_violation"] = feas
    else:
        ck["status"], lim["status"] = 1.0, 0.0
    return rep
