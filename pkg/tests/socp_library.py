"""Small SOCPs with analytic optima, shared by unit and acceptance tests."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from drpce.conic import ConicProgram


def program(c, cones=(), A=None, b=None) -> ConicProgram:
    """Dense helper; ``cones`` holds ``(F, g, h, d)`` with ``F`` possibly empty."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    Fs, gs, Hs, ds, dims = [], [], [], [], []
    for F, g, h, d in cones:
        F = np.asarray(F, dtype=float).reshape(-1, n)
        Fs.append(F)
        gs.append(np.asarray(g, dtype=float).ravel())
        Hs.append(np.asarray(h, dtype=float))
        ds.append(float(d))
        dims.append(F.shape[0])
    F = np.vstack(Fs) if Fs else np.zeros((0, n))
    g = np.concatenate(gs) if gs else np.zeros(0)
    H = np.vstack(Hs) if Hs else np.zeros((0, n))
    return ConicProgram(c=c, A_eq=sp.csr_matrix(A), b_eq=b, F=sp.csr_matrix(F), g=g,
                        H=sp.csr_matrix(H), d=np.array(ds), cone_dims=np.array(dims, int))


@dataclass
class Case:
    name: str
    P: ConicProgram
    status: str
    optimum: float = np.nan
    x: np.ndarray | None = None


def _norm_of_constant():
    # min t  s.t.  ||(3, 4)|| <= t
    return Case("norm_of_constant", program([1.0], [(np.zeros((2, 1)), [3.0, 4.0], [1.0], 0.0)]),
                "Optimal", 5.0, np.array([5.0]))


def _pinned_cone():
    # min x1 + x2  s.t.  x1 = 1, |x2| <= x1
    P = program([1.0, 1.0], [([[0.0, 1.0]], [0.0], [1.0, 0.0], 0.0)], A=[[1.0, 0.0]], b=[1.0])
    return Case("pinned_cone", P, "Optimal", 0.0, np.array([1.0, -1.0]))


def _lp():
    # min -x - y  s.t.  x, y >= 0, x + 2y <= 4, 3x + y <= 6
    e = np.zeros((0, 2))
    cones = [(e, [], [1, 0], 0), (e, [], [0, 1], 0), (e, [], [-1, -2], 4), (e, [], [-3, -1], 6)]
    return Case("lp_vertex", program([-1.0, -1.0], cones), "Optimal", -2.8,
                np.array([1.6, 1.2]))


def _unit_ball():
    # min c^T x  s.t.  ||x|| <= 1  ->  -||c||
    c = np.array([1.0, 2.0, 2.0])
    return Case("unit_ball", program(c, [(np.eye(3), np.zeros(3), np.zeros(3), 1.0)]),
                "Optimal", -3.0, -c / 3.0)


def _projection():
    # min t  s.t.  ||x - p|| <= t, 1^T x = 0  ->  |1^T p| / sqrt(3)
    p = np.array([1.0, 2.0, 3.0])
    F = np.hstack([np.eye(3), np.zeros((3, 1))])
    P = program([0, 0, 0, 1.0], [(F, -p, [0, 0, 0, 1.0], 0.0)], A=[[1.0, 1.0, 1.0, 0.0]],
                b=[0.0])
    return Case("hyperplane_projection", P, "Optimal", 6.0 / np.sqrt(3.0),
                np.append(p - 2.0, 2.0 * np.sqrt(3.0)))


def _quadratic_epigraph():
    # min t  s.t.  (x - 2)^2 <= t via ||[2(x - 2); t - 1]|| <= t + 1, x <= 1
    cones = [([[2.0, 0.0], [0.0, 1.0]], [-4.0, -1.0], [0.0, 1.0], 1.0),
             (np.zeros((0, 2)), [], [-1.0, 0.0], 1.0)]
    return Case("quadratic_epigraph", program([0.0, 1.0], cones), "Optimal", 1.0,
                np.array([1.0, 1.0]))


def _rotated_cone():
    # max x  s.t.  x^2 <= y, y <= 4
    cones = [([[2.0, 0.0], [0.0, 1.0]], [0.0, -1.0], [0.0, 1.0], 1.0),
             (np.zeros((0, 2)), [], [0.0, -1.0], 4.0)]
    return Case("rotated_cone", program([-1.0, 0.0], cones), "Optimal", -2.0,
                np.array([2.0, 4.0]))


def _large_cone():
    # min 1^T x  s.t.  ||x|| <= 1 in 39 dimensions (cone of size 40, low-rank KKT path)
    n = 39
    P = program(np.ones(n), [(np.eye(n), np.zeros(n), np.zeros(n), 1.0)])
    return Case("large_cone", P, "Optimal", -np.sqrt(n), -np.ones(n) / np.sqrt(n))


def _two_norms():
    # min t1 + t2  s.t.  ||x - a|| <= t1, ||x - b|| <= t2 with |a - b| = 2
    Fa = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    cones = [(Fa, [0.0, 0.0], [0, 0, 1.0, 0], 0.0), (Fa, [-2.0, 0.0], [0, 0, 0, 1.0], 0.0)]
    return Case("sum_of_distances", program([0, 0, 1.0, 1.0], cones), "Optimal", 2.0)


def _halfplane_norm():
    # min t  s.t.  ||x|| <= t, x1 + x2 >= 2
    cones = [([[1.0, 0, 0], [0, 1.0, 0]], [0.0, 0.0], [0, 0, 1.0], 0.0),
             (np.zeros((0, 3)), [], [1.0, 1.0, 0.0], -2.0)]
    return Case("halfplane_min_norm", program([0, 0, 1.0], cones), "Optimal", np.sqrt(2.0),
                np.array([1.0, 1.0, np.sqrt(2.0)]))


def _contradictory_equalities():
    return Case("contradictory_equalities",
                program([1.0], A=[[1.0], [1.0]], b=[1.0, 2.0]), "PrimalInfeasible")


def _ball_outside():
    # ||x|| <= 1 and x1 >= 2
    cones = [(np.eye(2), [0.0, 0.0], [0.0, 0.0], 1.0),
             (np.zeros((0, 2)), [], [1.0, 0.0], -2.0)]
    return Case("ball_and_halfspace", program([0.0, 1.0], cones), "PrimalInfeasible")


def _unbounded():
    # min -t  s.t.  ||x|| <= t
    cones = [([[1.0, 0.0]], [0.0], [0.0, 1.0], 0.0)]
    return Case("unbounded_cone", program([0.0, -1.0], cones), "DualInfeasible")


def optimal_cases() -> list[Case]:
    return [f() for f in (_norm_of_constant, _pinned_cone, _lp, _unit_ball, _projection,
                          _quadratic_epigraph, _rotated_cone, _large_cone, _two_norms,
                          _halfplane_norm)]


def infeasible_cases() -> list[Case]:
    return [_contradictory_equalities(), _ball_outside(), _unbounded()]
