import importlib.util

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from drpce import ocp
from drpce.conic import (SolverSettings, Status, check_certificate, read_program, solve,
                         solve_file, solve_with, write_program)
from drpce.conic.cones import ConeSet, NTScaling
from drpce.conic.ldl import SparseLDL

import socp_library
import support

OPTIMAL = socp_library.optimal_cases()
INFEASIBLE = socp_library.infeasible_cases()
seeds = st.integers(0, 2**32 - 1)
has_clarabel = importlib.util.find_spec("clarabel") is not None


@pytest.mark.parametrize("case", OPTIMAL, ids=lambda c: c.name)
def test_library_optimum(case):
    res = solve(case.P)
    assert res.status is Status.OPTIMAL
    assert abs(res.objective - case.optimum) <= 1e-7
    if case.x is not None:
        np.testing.assert_allclose(res.x, case.x, atol=1e-6)
    assert check_certificate(case.P, res).passed
    s = SolverSettings()
    assert res.residuals["pres"] <= s.tol_feas and res.residuals["dres"] <= s.tol_feas
    assert res.residuals["rel_gap"] <= s.tol_gap
    assert res.residuals["pobj"] - res.residuals["dobj"] <= s.tol_gap * (1 + abs(res.objective))


@pytest.mark.parametrize("case", INFEASIBLE, ids=lambda c: c.name)
def test_library_infeasible_returns_certificate(case):
    res = solve(case.P)
    assert res.status.value == case.status
    rep = check_certificate(case.P, res)
    assert rep.passed, rep.checks
    if res.status is Status.PRIMAL_INFEASIBLE:
        assert res.y is not None and res.z is not None
    else:
        assert np.all(np.isfinite(res.x))


def test_corrupted_solution_is_flagged():
    case = OPTIMAL[1]
    res = solve(case.P)
    res.x = res.x + np.array([1e-3, 0.0])
    rep = check_certificate(case.P, res)
    assert not rep.passed and "eq_residual" in rep.failures
    res = solve(OPTIMAL[3].P)
    res.x = res.x * 1.01
    assert "cone_violation" in check_certificate(OPTIMAL[3].P, res).failures
    res.status = Status.ITER_LIMIT
    assert not check_certificate(OPTIMAL[3].P, res).passed


@pytest.mark.parametrize("idx", [3, 4, 9])
def test_argmin_invariant_to_cost_scaling(idx):
    P = OPTIMAL[idx].P
    base = solve(P)
    scaled = solve(type(P)(c=7.5 * P.c, A_eq=P.A_eq, b_eq=P.b_eq, F=P.F, g=P.g, H=P.H,
                           d=P.d, cone_dims=P.cone_dims))
    np.testing.assert_allclose(scaled.x, base.x, atol=1e-6)
    assert scaled.objective == pytest.approx(7.5 * base.objective, rel=1e-7, abs=1e-8)


def test_solves_are_deterministic():
    inst = support.random_instance(np.random.default_rng(0), 2, 1, 3)
    P = ocp.build_ocp(inst.H, inst.spec, support.sampled_vertices(inst, 0.2, 4))
    a, b = solve(P), solve(P)
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.z, b.z)


@pytest.mark.parametrize("case", OPTIMAL + INFEASIBLE[1:], ids=lambda c: c.name)
def test_kkt_residual_in_debug_mode(case):
    """Debug mode asserts ||K z - r|| <= 1e-8 ||r|| on every linear solve."""
    res = solve(case.P, SolverSettings(debug=True))
    assert res.status.value == case.status


def test_kkt_residual_in_debug_mode_on_ocp():
    inst = support.random_instance(np.random.default_rng(1), 2, 1, 3)
    P = ocp.build_ocp(inst.H, inst.spec, support.sampled_vertices(inst, 0.2, 3))
    assert solve(P, SolverSettings(debug=True)).optimal


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(tol_gap=0.0)
    with pytest.raises(ValueError):
        SolverSettings(regularization=-1.0)
    with pytest.raises(ValueError):
        SolverSettings(max_iter=0)


def test_iteration_limit_is_reported():
    inst = support.random_instance(np.random.default_rng(2), 2, 1, 3)
    P = ocp.build_ocp(inst.H, inst.spec, support.sampled_vertices(inst, 0.2, 3))
    res = solve(P, SolverSettings(max_iter=2))
    assert res.status is Status.ITER_LIMIT
    assert not check_certificate(P, res).passed


def test_loose_tolerance_stops_earlier():
    inst = support.random_instance(np.random.default_rng(3), 2, 1, 3)
    P = ocp.build_ocp(inst.H, inst.spec, support.sampled_vertices(inst, 0.2, 3))
    tight, loose = solve(P), solve(P, SolverSettings(tol_gap=1e-4, tol_feas=1e-4))
    assert loose.optimal and loose.iterations < tight.iterations
    assert loose.objective == pytest.approx(tight.objective, rel=1e-3)


@given(seeds, st.integers(1, 30), st.integers(0, 15))
def test_sparse_ldl_on_quasidefinite(seed, n, m):
    rng = np.random.default_rng(seed)
    Pm = sp.random(n, n, density=0.3, random_state=rng)
    Pm = Pm @ Pm.T + sp.eye(n)
    A = sp.random(m, n, density=0.4, random_state=rng)
    K = sp.bmat([[Pm, A.T], [A, -sp.eye(m)]]).tocsc()
    U = sp.triu(K).tocsc()
    U.eliminate_zeros()
    signs = np.concatenate([np.ones(n), -np.ones(m)])
    ldl = SparseLDL(U, signs)
    assert ldl.factor(U.tocoo().data) == 0
    b = rng.standard_normal(n + m)
    x = ldl.solve(b)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * max(1.0, np.linalg.norm(b))
    # same pattern, new values
    U2 = U.copy()
    U2.data = U2.data * rng.uniform(0.5, 2.0)
    ldl.factor(U2.tocoo().data)
    K2 = (U2 + sp.triu(U2, 1).T).tocsc()
    assert np.linalg.norm(K2 @ ldl.solve(b) - b) <= 1e-10 * max(1.0, np.linalg.norm(b))


def test_sparse_ldl_regularizes_zero_pivots():
    U = sp.csc_matrix((np.array([1e-20, 1.0, -1.0]), ([0, 0, 1], [0, 1, 1])), shape=(2, 2))
    ldl = SparseLDL(U, np.array([1, -1]))
    assert ldl.factor(U.tocoo().data) >= 1
    assert np.all(np.isfinite(ldl.D)) and ldl.D[0] * ldl.signs[0] > 0


@given(seeds, st.lists(st.integers(1, 6), min_size=1, max_size=4))
def test_cone_step_and_scaling(seed, dims):
    rng = np.random.default_rng(seed)
    cones = ConeSet(dims)

    def interior():
        u = rng.standard_normal(cones.size)
        return cones.shift_into_interior(u)

    s, z = interior(), interior()
    assert np.all(cones.margin(s) > 0)
    d = rng.standard_normal(cones.size)
    a = cones.max_step(s, d)
    if np.isfinite(a):
        edge = s + a * d
        assert cones.margin(edge).min() <= 1e-8 * (1 + np.abs(edge).max())
        assert cones.margin(s + 0.99 * a * d).min() > -1e-12
    else:
        assert cones.margin(s + 1e6 * d).min() >= -1e-6 * 1e6
    W = NTScaling(cones, s, z)
    np.testing.assert_allclose(W.apply(z), W.apply_inv(s), rtol=1e-8, atol=1e-10)
    v = rng.standard_normal(cones.size)
    np.testing.assert_allclose(W.apply_inv(W.apply(v)), v, rtol=1e-8, atol=1e-10)
    lam = W.lam
    x = cones.inv_circ(lam, v)
    np.testing.assert_allclose(cones.circ(lam, x), v, rtol=1e-8, atol=1e-10)


def test_program_file_roundtrip(tmp_path):
    inst = support.random_instance(np.random.default_rng(4), 2, 1, 2)
    P = ocp.build_ocp(inst.H, inst.spec, support.sampled_vertices(inst, 0.2, 2))
    write_program(P, tmp_path / "a.socp")
    Q = read_program(tmp_path / "a.socp")
    for name in ("c", "b_eq", "g", "d", "cone_dims"):
        np.testing.assert_array_equal(getattr(Q, name), getattr(P, name))
    for name in ("A_eq", "F", "H"):
        assert (getattr(Q, name) != getattr(P, name)).nnz == 0
    assert Q.layout == P.layout and Q.meta == P.meta
    write_program(Q, tmp_path / "b.socp")
    assert (tmp_path / "a.socp").read_bytes() == (tmp_path / "b.socp").read_bytes()
    Q2, res = solve_file(tmp_path / "a.socp")
    assert res.optimal


def test_program_rejects_inconsistent_data(tmp_path):
    P = OPTIMAL[0].P
    with pytest.raises(ValueError):
        type(P)(c=P.c, A_eq=P.A_eq, b_eq=P.b_eq, F=P.F, g=P.g[:1], H=P.H, d=P.d,
                cone_dims=P.cone_dims)
    with pytest.raises(ValueError):
        type(P)(c=P.c, A_eq=P.A_eq, b_eq=P.b_eq, F=P.F, g=P.g, H=P.H, d=P.d,
                cone_dims=P.cone_dims, layout={"t": (0, 2)})
    (tmp_path / "bad.socp").write_text("not a program\n")
    with pytest.raises(ValueError):
        read_program(tmp_path / "bad.socp")


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve_with(OPTIMAL[0].P, "mosek")


@pytest.mark.skipif(not has_clarabel, reason="clarabel not installed")
@pytest.mark.parametrize("case", OPTIMAL, ids=lambda c: c.name)
def test_clarabel_agrees_on_library(case):
    ext = solve_with(case.P, "clarabel")
    assert ext.optimal
    assert abs(ext.objective - case.optimum) <= 1e-7
    assert check_certificate(case.P, ext).passed


@pytest.mark.skipif(not has_clarabel, reason="clarabel not installed")
def test_clarabel_agrees_on_ocp(tmp_path):
    inst = support.random_instance(np.random.default_rng(5), 3, 2, 3)
    P = ocp.build_ocp(inst.H, inst.spec, support.sampled_vertices(inst, 0.3, 5))
    write_program(P, tmp_path / "p.socp")
    _, ext = solve_file(tmp_path / "p.socp", "clarabel")
    own = solve(P)
    assert ext.optimal and own.optimal
    assert check_certificate(P, ext).passed == check_certificate(P, own).passed is True
    assert abs(ext.objective - own.objective) <= 1e-7 * max(1.0, abs(own.objective))
