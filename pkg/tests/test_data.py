import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drpce import data, sim
from drpce.data import DataError, TrajectoryData

import support


def _write_csv(path, rows, header="t,u_0,y_0,w_0,w_1"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")


def test_load_trajectory_70_rows(tmp_path):
    rng = np.random.default_rng(0)
    rows = [[t, *rng.standard_normal(4)] for t in range(70)]
    _write_csv(tmp_path / "d.csv", rows)
    traj = data.load_trajectory(tmp_path / "d.csv", (1, 1, 2))
    assert traj.T == 70
    assert traj.dims == (1, 1, 2)
    np.testing.assert_allclose(traj.w[3], rows[3][3:])


def test_load_trajectory_single_row(tmp_path):
    _write_csv(tmp_path / "d.csv", [[0, 1.0, 2.0, 3.0, 4.0]])
    assert data.load_trajectory(tmp_path / "d.csv", (1, 1, 2)).T == 1


def test_load_trajectory_short_row(tmp_path):
    _write_csv(tmp_path / "d.csv", [[0, 1.0, 2.0, 3.0, 4.0], [1, 1.0, 2.0, 3.0]])
    with pytest.raises(DataError):
        data.load_trajectory(tmp_path / "d.csv", (1, 1, 2))


def test_load_trajectory_rejects_empty_and_bad_header(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(DataError):
        data.load_trajectory(tmp_path / "e.csv", (1, 1, 2))
    _write_csv(tmp_path / "h.csv", [[0, 1, 2, 3]], header="t,u_0,y_0,w_0")
    with pytest.raises(DataError):
        data.load_trajectory(tmp_path / "h.csv", (1, 1, 2))
    _write_csv(tmp_path / "n.csv", [[0, 1, "x", 3, 4]])
    with pytest.raises(DataError):
        data.load_trajectory(tmp_path / "n.csv", (1, 1, 2))


def test_trajectory_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    traj = TrajectoryData(rng.standard_normal((9, 2)), rng.standard_normal((9, 1)),
                          rng.standard_normal((9, 3)))
    data.save_trajectory(traj, tmp_path / "a.csv")
    back = data.load_trajectory(tmp_path / "a.csv", traj.dims)
    for name in "uyw":
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    data.save_trajectory(back, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_trajectory_length_mismatch():
    with pytest.raises(DataError):
        TrajectoryData(np.zeros((3, 1)), np.zeros((4, 1)), np.zeros((3, 1)))


def test_build_hankel_examples():
    np.testing.assert_array_equal(data.build_hankel([1, 2, 3, 4], 2), [[1, 2, 3], [2, 3, 4]])
    np.testing.assert_array_equal(data.build_hankel([1, 0, 0, 1, 0], 3),
                                  [[1, 0, 0], [0, 0, 1], [0, 1, 0]])
    v = np.arange(10.0).reshape(5, 2)
    H = data.build_hankel(v, 5)
    assert H.shape == (10, 1)
    np.testing.assert_array_equal(H[:, 0], v.ravel())
    with pytest.raises(DataError):
        data.build_hankel([1, 2], 3)


@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 3)),
              elements=st.floats(-10, 10)), st.data())
def test_hankel_shift_property(v, draw):
    T, n = v.shape
    t = draw.draw(st.integers(1, T))
    H = data.build_hankel(v, t)
    assert H.shape == (t * n, T - t + 1)
    # rows shifted by one block equal columns shifted by one
    np.testing.assert_array_equal(H[n:, :-1], H[:-n, 1:])
    for j in range(H.shape[1]):
        np.testing.assert_array_equal(H[:, j], v[j:j + t].ravel())


def test_persistency_examples():
    const = TrajectoryData(np.ones(10), np.zeros(10), np.zeros((10, 0)))
    rep = data.check_persistency(const, 2)
    assert not rep.ok and rep.rank == 1
    rng = np.random.default_rng(3)
    noise = TrajectoryData(rng.standard_normal(50), np.zeros(50), np.zeros((50, 0)))
    rep = data.check_persistency(noise, 5)
    assert rep.ok and rep.rank == 5 and rep.min_singular > 0
    short = TrajectoryData(rng.standard_normal(4), np.zeros(4), np.zeros((4, 0)))
    rep = data.check_persistency(short, 4)
    assert rep.cols == 1 and not rep.ok
    with pytest.raises(DataError):
        data.check_persistency(short, 5)


def test_split_hankel_dimensions():
    rng = np.random.default_rng(0)
    traj = TrajectoryData(rng.standard_normal((70, 1)), rng.standard_normal((70, 1)),
                          rng.standard_normal((70, 2)))
    H = data.split_hankel(traj, 2, 10)
    assert H.H_up.shape == (2, 59) and H.H_uf.shape == (10, 59)
    assert H.H_wp.shape == (4, 59) and H.H_wf.shape == (20, 59)
    assert H.dims == (1, 1, 2) and H.n_cols == 59
    tight = TrajectoryData(traj.u[:12], traj.y[:12], traj.w[:12])
    assert data.split_hankel(tight, 2, 10).n_cols == 1
    with pytest.raises(DataError):
        data.split_hankel(traj, 2, 0)
    with pytest.raises(DataError):
        data.split_hankel(tight, 3, 10)


def test_estimate_moments_examples():
    m = data.estimate_moments(np.array([[1, 0], [-1, 0], [0, 1], [0, -1.0]]))
    np.testing.assert_allclose(m.mean, [0, 0], atol=1e-15)
    np.testing.assert_allclose(m.cov, np.diag([2 / 3, 2 / 3]), atol=1e-15)
    with pytest.raises(DataError):
        data.estimate_moments(np.array([[1.0, 2.0], [1.0, 2.0]]))
    with pytest.raises(DataError):
        data.estimate_moments(np.array([[1.0, 2.0]]))


def test_estimate_moments_on_benchmark_data():
    """70 mixture samples give moments of the quoted magnitude."""
    from drpce import experiment
    cfg = experiment.default_config()
    traj, _, mom, _ = experiment.prepare(cfg, seed=11)
    assert traj.T == 70
    true = cfg.disturbance
    se = np.sqrt(np.diag(true.cov) / 70)
    assert np.all(np.abs(mom.mean - true.mean) < 4 * se)
    assert np.all(np.linalg.eigvalsh(mom.cov) > 0)
    assert np.allclose(mom.cov, mom.cov.T, atol=1e-10)
    assert 0.005 < mom.cov[0, 0] < 0.05


def test_estimate_moments_converges():
    rng = np.random.default_rng(5)
    n = 100_000
    G = np.array([[1.0, 0.3], [0.3, 0.5]])
    w = rng.multivariate_normal([0.2, -0.1], G, size=n)
    m = data.estimate_moments(w)
    assert np.all(np.abs(m.mean - [0.2, -0.1]) < 3 * np.sqrt(np.diag(G) / n))
    # Var of sample variance for a Gaussian is 2 s^4 / n
    assert np.all(np.abs(np.diag(m.cov) - np.diag(G)) < 3 * np.sqrt(2 * np.diag(G) ** 2 / n))


def test_moments_json_roundtrip(tmp_path):
    m = data.EmpiricalMoments(np.array([0.1, 0.2]), np.array([[1.0, 0.1], [0.1, 2.0]]))
    data.save_moments(m, tmp_path / "m.json")
    back = data.load_moments(tmp_path / "m.json")
    np.testing.assert_array_equal(back.mean, m.mean)
    np.testing.assert_array_equal(back.cov, m.cov)


@pytest.mark.parametrize("seed", range(5))
def test_fundamental_lemma_membership(seed):
    rng = np.random.default_rng(100 + seed)
    inst = support.random_instance(rng, int(rng.integers(1, 4)), 1, 4, seed=seed)
    model, spec, H = inst.model, inst.spec, inst.H
    L = spec.T_ini + spec.N
    M = np.vstack([H.H_up, H.H_uf]), np.vstack([H.H_yp, H.H_yf]), np.vstack([H.H_wp, H.H_wf])
    u = rng.standard_normal((L, 1))
    w = rng.standard_normal((L, model.n_w))
    y, _ = model.simulate(rng.standard_normal(model.n_x), u, w)

    def residual(u, y, w):
        A = np.vstack(M)
        b = np.concatenate([u.ravel(), y.ravel(), w.ravel()])
        g, *_ = np.linalg.lstsq(A, b, rcond=None)
        return np.linalg.norm(A @ g - b) / max(1.0, np.linalg.norm(b))

    assert residual(u, y, w) <= 1e-8
    assert residual(u, rng.standard_normal(y.shape), w) > 1e-4


def test_generate_data_is_pe_at_benchmark_order():
    from drpce import experiment
    cfg = experiment.default_config()
    traj = sim.generate_experiment_data(cfg.model, cfg.disturbance, 70, seed=0, order=14)
    rep = data.check_persistency(traj, 14)
    assert rep.ok and rep.rows == 42
