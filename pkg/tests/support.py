"""Shared builders for the test suite."""

from dataclasses import dataclass

import numpy as np

from drpce import ambiguity, data, ocp, sim

# one PASS/FAIL line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def random_pd(rng, n, lo=0.1, hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    M = rng.standard_normal((n, rank))
    return M @ M.T


@dataclass
class Instance:
    model: sim.LtiModel
    dist: sim.DisturbanceModel
    spec: ocp.OcpSpec
    traj: data.TrajectoryData
    H: data.HankelSystem
    moments: data.EmpiricalMoments


def random_instance(rng, n_x, n_w, N, seed=0, bound=1.0, eps=0.2,
                    output_bound=None) -> Instance:
    """Stable random system, PE data and an OCP with a consistent initial window."""
    model = sim.random_system(rng, n_x, 1, 1, n_w)
    T_ini = model.lag()
    dist = sim.DisturbanceModel("gaussian", {"mean": np.zeros(n_w), "cov": 0.1 * np.eye(n_w)})
    order = T_ini + N + n_x
    T = order * (2 + n_w) + order + 20
    traj = sim.generate_experiment_data(model, dist, T, seed=seed, order=order)
    H = data.split_hankel(traj, T_ini, N)
    x = rng.standard_normal(n_x)
    up = rng.uniform(-0.3, 0.3, (T_ini, 1))
    wp = dist.sample(rng, T_ini)
    yp, _ = model.simulate(x, up, wp)
    out = np.zeros((0, 1)) if output_bound is None else [[1.0 / output_bound],
                                                         [-1.0 / output_bound]]
    spec = ocp.OcpSpec(N=N, T_ini=T_ini, Q=np.eye(1), R=np.eye(1),
                       input_halfspaces=[[1.0 / bound], [-1.0 / bound]],
                       output_halfspaces=out, eps_u=eps, eps_y=eps,
                       init_u=up, init_y=yp, init_w=wp)
    return Instance(model, dist, spec, traj, H, data.estimate_moments(traj.w))


def sampled_vertices(inst: Instance, rho, s, seed=0) -> ambiguity.VertexSet:
    A = ambiguity.CoeffAmbiguity.from_moments(inst.moments.mean, inst.moments.cov, rho)
    return ambiguity.sample_ambiguity(A, s, seed)
