"""Ground-truth LTI systems, disturbance laws, rollouts and Monte Carlo statistics.

Also hosts the model-based PCE-propagation program, which has the same
decision structure as the data-driven one but replaces the Hankel
constraints by explicit coefficient dynamics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ambiguity import VertexSet
from .conic.program import ConicProgram
from .data import DataError, TrajectoryData, check_persistency
from .ocp import OcpSpec, Policy, assemble

RANK_TOL = 1e-9
# Deterministic inputs placed on a bound by the solver must not count as violations.
VIOLATION_TOL = 1e-6


def _rank(M, tol=RANK_TOL) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


@dataclass(frozen=True)
class LtiModel:
    """``x+ = A x + B u + E w``, ``y = C x + D u + F w``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "E", "F"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.E.shape[0] != n:
            raise ValueError("A, B, E row counts must equal n_x")
        if self.C.shape[1] != n:
            raise ValueError("C must have n_x columns")
        if self.D.shape != (self.n_y, self.n_u) or self.F.shape != (self.n_y, self.n_w):
            raise ValueError("D/F shapes inconsistent with B, C, E")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_w(self) -> int:
        return self.E.shape[1]

    def controllability_matrix(self) -> np.ndarray:
        BE = np.hstack([self.B, self.E])
        blocks, M = [], BE
        for _ in range(self.n_x):
            blocks.append(M)
            M = self.A @ M
        return np.hstack(blocks)

    def observability_matrix(self, steps: int | None = None) -> np.ndarray:
        blocks, M = [], self.C
        for _ in range(steps or self.n_x):
            blocks.append(M)
            M = M @ self.A
        return np.vstack(blocks)

    def is_controllable(self) -> bool:
        return _rank(self.controllability_matrix()) == self.n_x

    def is_observable(self) -> bool:
        return _rank(self.observability_matrix()) == self.n_x

    def lag(self) -> int:
        """Smallest ``l`` with a full-rank ``l``-step observability matrix."""
        for ell in range(1, self.n_x + 1):
            if _rank(self.observability_matrix(ell)) == self.n_x:
                return ell
        raise ValueError("system is not observable")

    def toeplitz(self, steps: int):
        """Stacked maps ``y = O x0 + T_u u + T_w w`` over ``steps`` samples."""
        O = self.observability_matrix(steps)
        Tu = np.zeros((steps * self.n_y, steps * self.n_u))
        Tw = np.zeros((steps * self.n_y, steps * self.n_w))
        markov_u = [self.D]
        markov_w = [self.F]
        M = np.eye(self.n_x)
        for _ in range(1, steps):
            markov_u.append(self.C @ M @ self.B)
            markov_w.append(self.C @ M @ self.E)
            M = self.A @ M
        for k in range(steps):
            for i in range(k + 1):
                rs = slice(k * self.n_y, (k + 1) * self.n_y)
                Tu[rs, i * self.n_u:(i + 1) * self.n_u] = markov_u[k - i]
                Tw[rs, i * self.n_w:(i + 1) * self.n_w] = markov_w[k - i]
        return O, Tu, Tw

    def simulate(self, x0, u, w):
        """Roll out one trajectory; ``u`` (T, n_u), ``w`` (T, n_w)."""
        u = np.asarray(u, dtype=float).reshape(-1, self.n_u)
        w = np.asarray(w, dtype=float).reshape(-1, self.n_w)
        x = np.asarray(x0, dtype=float).copy()
        ys = np.empty((u.shape[0], self.n_y))
        for k in range(u.shape[0]):
            ys[k] = self.C @ x + self.D @ u[k] + self.F @ w[k]
            x = self.A @ x + self.B @ u[k] + self.E @ w[k]
        return ys, x

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("A", "B", "C", "D", "E", "F")}

    @classmethod
    def from_json(cls, obj: dict) -> "LtiModel":
        A = np.atleast_2d(np.asarray(obj["A"], dtype=float))
        B = np.asarray(obj["B"], dtype=float).reshape(A.shape[0], -1)
        C = np.asarray(obj["C"], dtype=float).reshape(-1, A.shape[0])
        E = np.asarray(obj.get("E", np.eye(A.shape[0])), dtype=float).reshape(A.shape[0], -1)
        D = np.asarray(obj.get("D", 0.0), dtype=float) * np.ones((C.shape[0], B.shape[1]))
        F = np.asarray(obj.get("F", 0.0), dtype=float) * np.ones((C.shape[0], E.shape[1]))
        return cls(A, B, C, D, E, F)


@dataclass(frozen=True)
class DisturbanceModel:
    """I.i.d. disturbance law with analytically known first two moments.

    ``kind`` is one of ``"gaussian_mixture"`` (``weights``, ``means``,
    ``covs``), ``"gaussian"`` (``mean``, ``cov``) or ``"uniform"``
    (``low``, ``high`` per component, independent).
    """

    kind: str
    params: dict

    def __post_init__(self):
        p = {k: np.asarray(v, dtype=float) for k, v in self.params.items()}
        if self.kind == "gaussian_mixture":
            w = p["weights"]
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("mixture weights must be positive and sum to 1")
            p["means"] = np.atleast_2d(p["means"])
            covs = p["covs"]
            if covs.ndim == 1:
                covs = covs[:, None, None]
            if covs.ndim != 3:
                raise ValueError("mixture covariances must have shape (k, n_w, n_w)")
            p["covs"] = covs
            if len(w) != p["means"].shape[0] or len(w) != covs.shape[0]:
                raise ValueError("mixture component counts differ")
            for S in covs:
                if np.linalg.eigvalsh(0.5 * (S + S.T)).min() < -1e-12:
                    raise ValueError("component covariance must be PSD")
        elif self.kind == "gaussian":
            p["mean"] = np.atleast_1d(p["mean"])
            p["cov"] = np.atleast_2d(p["cov"])
            if np.linalg.eigvalsh(p["cov"]).min() < -1e-12:
                raise ValueError("covariance must be PSD")
        elif self.kind == "uniform":
            p["low"], p["high"] = np.atleast_1d(p["low"]), np.atleast_1d(p["high"])
            if np.any(p["high"] < p["low"]):
                raise ValueError("uniform bounds must satisfy low <= high")
        else:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        object.__setattr__(self, "params", p)

    @property
    def n_w(self) -> int:
        return self.mean.size

    @property
    def mean(self) -> np.ndarray:
        p = self.params
        if self.kind == "gaussian_mixture":
            return p["weights"] @ p["means"]
        if self.kind == "gaussian":
            return p["mean"]
        return 0.5 * (p["low"] + p["high"])

    @property
    def cov(self) -> np.ndarray:
        p = self.params
        if self.kind == "gaussian_mixture":
            m = self.mean
            second = sum(wi * (S + np.outer(mu, mu))
                         for wi, mu, S in zip(p["weights"], p["means"], p["covs"]))
            return second - np.outer(m, m)
        if self.kind == "gaussian":
            return p["cov"]
        return np.diag((p["high"] - p["low"]) ** 2 / 12.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.kind == "gaussian_mixture":
            comp = rng.choice(len(p["weights"]), size=n, p=p["weights"])
            z = rng.standard_normal((n, self.n_w))
            out = np.empty((n, self.n_w))
            for c in range(len(p["weights"])):
                sel = comp == c
                L = _psd_factor(p["covs"][c])
                out[sel] = p["means"][c] + z[sel] @ L.T
            return out
        if self.kind == "gaussian":
            return p["mean"] + rng.standard_normal((n, self.n_w)) @ _psd_factor(p["cov"]).T
        return rng.uniform(p["low"], p["high"], size=(n, self.n_w))

    def to_json(self) -> dict:
        return {"kind": self.kind, **{k: v.tolist() for k, v in self.params.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "DisturbanceModel":
        obj = dict(obj)
        kind = obj.pop("kind")
        return cls(kind, obj)


def _psd_factor(S):
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


@dataclass
class McReport:
    J: float
    violations: int
    n_traj: int
    seed: int | None
    evaluations: int
    cost_stderr: float = 0.0
    traces: tuple | None = None
    per_step: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.J < 0:
            raise ValueError("average cost must be nonnegative")
        if self.violations > self.evaluations:
            raise ValueError("more violations than constraint evaluations")

    def write_traces(self, path) -> None:
        if self.traces is None:
            raise ValueError("report was generated without traces")
        U, Y = self.traces
        n_traj, N, n_u = U.shape
        n_y = Y.shape[2]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["traj", "k"] + [f"u{i}" for i in range(n_u)]
                        + [f"y{i}" for i in range(n_y)])
            for t in range(n_traj):
                for k in range(N):
                    wr.writerow([t, k] + [repr(float(v)) for v in U[t, k]]
                                + [repr(float(v)) for v in Y[t, k]])


def reconstruct_initial_state(model: LtiModel, init_u, init_y, init_w) -> np.ndarray:
    """State at the end of the initial window via observability least squares."""
    init_u = np.asarray(init_u, dtype=float).reshape(-1, model.n_u)
    init_y = np.asarray(init_y, dtype=float).reshape(-1, model.n_y)
    init_w = np.asarray(init_w, dtype=float).reshape(-1, model.n_w)
    T = init_u.shape[0]
    O, Tu, Tw = model.toeplitz(T)
    if _rank(O) < model.n_x:
        raise ValueError(f"initial state not identifiable from a window of length {T}")
    rhs = init_y.ravel() - Tu @ init_u.ravel() - Tw @ init_w.ravel()
    x_start, *_ = np.linalg.lstsq(O, rhs, rcond=None)
    x = x_start
    for k in range(T):
        x = model.A @ x + model.B @ init_u[k] + model.E @ init_w[k]
    return x


def simulate_rollout(model: LtiModel, policy: Policy, x0, w_seq, Q=None, R=None):
    """Apply ``u = u_bar + K_w w`` for realized ``w_seq`` (N, n_w).

    Returns ``(u_seq, y_seq, cost)`` with ``cost = sum_k y'Qy + u'Ru``.
    """
    w_seq = np.asarray(w_seq, dtype=float).reshape(-1, model.n_w)
    u = (policy.u_bar + policy.K_w @ w_seq.ravel()).reshape(-1, model.n_u)
    if u.shape[0] != w_seq.shape[0]:
        raise ValueError("disturbance sequence length does not match the policy horizon")
    y, _ = model.simulate(x0, u, w_seq)
    Q = np.eye(model.n_y) if Q is None else np.atleast_2d(Q)
    R = np.eye(model.n_u) if R is None else np.atleast_2d(R)
    cost = float(np.einsum("ka,ab,kb->", y, Q, y) + np.einsum("ka,ab,kb->", u, R, u))
    return u, y, cost


def monte_carlo(model: LtiModel, policy: Policy, spec: OcpSpec, dist: DisturbanceModel,
                n_traj: int, seed: int, keep_traces: bool = False) -> McReport:
    """Average realized cost and count half-space violations over ``n_traj`` rollouts."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    N = spec.N
    rng = np.random.default_rng(seed)
    W = dist.sample(rng, n_traj * N).reshape(n_traj, N, model.n_w)
    U = (policy.u_bar[None] + W.reshape(n_traj, -1) @ policy.K_w.T).reshape(n_traj, N, model.n_u)
    x = np.tile(reconstruct_initial_state(model, spec.init_u, spec.init_y, spec.init_w),
                (n_traj, 1))
    Y = np.empty((n_traj, N, model.n_y))
    for k in range(N):
        Y[:, k] = x @ model.C.T + U[:, k] @ model.D.T + W[:, k] @ model.F.T
        x = x @ model.A.T + U[:, k] @ model.B.T + W[:, k] @ model.E.T
    costs = (np.einsum("tka,ab,tkb->t", Y, spec.Q, Y)
             + np.einsum("tka,ab,tkb->t", U, spec.R, U))
    viol_u = U @ spec.input_halfspaces.T > 1.0 + VIOLATION_TOL
    viol_y = Y @ spec.output_halfspaces.T > 1.0 + VIOLATION_TOL
    per_step = viol_u.sum(axis=(0, 2)) + viol_y.sum(axis=(0, 2))
    n_eval = n_traj * N * (spec.input_halfspaces.shape[0] + spec.output_halfspaces.shape[0])
    stderr = float(costs.std(ddof=1) / np.sqrt(n_traj)) if n_traj > 1 else 0.0
    return McReport(J=float(costs.mean()), violations=int(viol_u.sum() + viol_y.sum()),
                    n_traj=n_traj, seed=seed, evaluations=n_eval, cost_stderr=stderr,
                    traces=(U, Y) if keep_traces else None, per_step=per_step)


def pce_oracle(model: LtiModel, spec: OcpSpec, vertices: VertexSet) -> ConicProgram:
    """Model-based counterpart of the data-driven program.

    Output coefficients follow ``y^j = O x^j_0 + T_u u^j + T_w w^j`` with
    ``x^0_0`` the reconstructed initial state and ``x^j_0 = 0`` for j >= 1.
    """
    if (model.n_u, model.n_y, model.n_w) != (spec.n_u, spec.n_y, spec.n_w):
        raise ValueError("model dimensions do not match the OCP spec")
    N = spec.N
    x_ini = reconstruct_initial_state(model, spec.init_u, spec.init_y, spec.init_w)
    O, Tu, Tw = model.toeplitz(N)
    Tu_s = sp.csr_matrix(Tu)
    free = O @ x_ini

    def dynamics(B, v, j, w_col):
        u = B.var(f"v{v}/u{j}", N * spec.n_u)
        y = B.var(f"v{v}/y{j}", N * spec.n_y)
        rhs = Tw @ w_col + (free if j == 0 else 0.0)
        B.eq([(y, sp.eye(N * spec.n_y)), (u, -Tu_s)], rhs)
        return u, y

    return assemble(spec, vertices, dynamics, {"kind": "model-based"})


def generate_experiment_data(model: LtiModel, dist: DisturbanceModel, T: int, seed: int,
                             order: int | None = None, x0=None,
                             input_law: str = "uniform") -> TrajectoryData:
    """Excite the system with i.i.d. inputs and record ``(u, y, w)``.

    When ``order`` is given the stacked (u, w) signal must be persistently
    exciting of that order; up to 10 attempts with derived streams are made.
    """
    if T < 1:
        raise DataError("T must be >= 1")
    if order is not None and order > T:
        raise DataError(f"T={T} is too short for persistency order {order}")
    if input_law != "uniform":
        raise ValueError(f"unsupported input law {input_law!r}")
    x0 = np.zeros(model.n_x) if x0 is None else np.asarray(x0, dtype=float)
    seq = np.random.SeedSequence(seed)
    report = None
    for attempt, child in enumerate(seq.spawn(10)):
        rng = np.random.default_rng(child)
        u = rng.uniform(-1.0, 1.0, size=(T, model.n_u))
        w = dist.sample(rng, T)
        y, _ = model.simulate(x0, u, w)
        data = TrajectoryData(u, y, w)
        if order is None:
            return data
        report = check_persistency(data, order)
        if report.ok:
            return data
    raise DataError(f"persistency of order {order} not reached after 10 attempts "
                    f"(rank {report.rank}/{report.rows})")


def random_system(rng: np.random.Generator, n_x: int, n_u: int = 1, n_y: int = 1,
                  n_w: int = 1, feedthrough: bool = False, max_tries: int = 100) -> LtiModel:
    """Random stable, controllable and observable system."""
    for _ in range(max_tries):
        A = rng.standard_normal((n_x, n_x))
        rad = max(abs(np.linalg.eigvals(A)))
        A *= rng.uniform(0.5, 0.95) / max(rad, 1e-12)
        B = rng.standard_normal((n_x, n_u))
        C = rng.standard_normal((n_y, n_x))
        E = rng.standard_normal((n_x, n_w))
        D = rng.standard_normal((n_y, n_u)) * 0.5 if feedthrough else np.zeros((n_y, n_u))
        F = rng.standard_normal((n_y, n_w)) * 0.5 if feedthrough else np.zeros((n_y, n_w))
        m = LtiModel(A, B, C, D, E, F)
        if m.is_controllable() and m.is_observable():
            return m
    raise RuntimeError("could not draw a controllable and observable system")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())
