"""Solver backends behind one entry point.

The built-in interior-point method is the default. ``clarabel`` is an
optional cross-check, used only when the package is installed.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .program import ConicProgram, read_program
from .solver import SolveResult, SolverSettings, Status, solve

BACKENDS = ("internal", "clarabel")


def _solve_clarabel(P: ConicProgram, settings: SolverSettings) -> SolveResult:
    try:
        import clarabel
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("the clarabel backend needs the 'clarabel' package") from exc
    G, h, dims = P.standard_form()
    A = sp.vstack([P.A_eq, G]).tocsc()
    b = np.concatenate([P.b_eq, h])
    cones = [clarabel.ZeroConeT(P.b_eq.size)] if P.b_eq.size else []
    for q in dims:
        cones.append(clarabel.NonnegativeConeT(1) if q == 1 else clarabel.SecondOrderConeT(int(q)))
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.tol_gap_abs = opts.tol_gap_rel = settings.tol_gap
    opts.tol_feas = settings.tol_feas
    opts.max_iter = settings.max_iter
    n = P.n
    sol = clarabel.DefaultSolver(sp.csc_matrix((n, n)), P.c, A, b, cones, opts).solve()
    status = {
        "Solved": Status.OPTIMAL,
        "PrimalInfeasible": Status.PRIMAL_INFEASIBLE,
        "DualInfeasible": Status.DUAL_INFEASIBLE,
        "MaxIterations": Status.ITER_LIMIT,
    }.get(str(sol.status), Status.NUMERICAL_FAILURE)
    z_all = np.asarray(sol.z)
    m = P.b_eq.size
    y, z = z_all[:m], z_all[m:]
    x = np.asarray(sol.x)
    if status is Status.PRIMAL_INFEASIBLE:
        scale = -(P.b_eq @ y + h @ z)
        return SolveResult(status, np.full(n, np.nan), np.inf, {}, sol.iterations,
                           y=y / scale, z=z / scale, message="clarabel")
    if status is Status.DUAL_INFEASIBLE:
        return SolveResult(status, x / -(P.c @ x), -np.inf, {}, sol.iterations,
                           message="clarabel")
    return SolveResult(status, x, float(P.c @ x), {}, sol.iterations, y=y, z=z,
                       s=np.asarray(sol.s)[m:], message="clarabel")


def solve_with(P: ConicProgram, backend: str = "internal",
               settings: SolverSettings | None = None) -> SolveResult:
    settings = settings or SolverSettings()
    if backend == "internal":
        return solve(P, settings)
    if backend == "clarabel":
        return _solve_clarabel(P, settings)
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def solve_file(path, backend: str = "internal",
               settings: SolverSettings | None = None) -> tuple[ConicProgram, SolveResult]:
    """Read a program in the sparse-triplet format and solve it."""
    P = read_program(path)
    return P, solve_with(P, backend, settings)
