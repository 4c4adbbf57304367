"""Recorded trajectories, Hankel matrices, persistency of excitation, moments."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

PE_RANK_TOL = 1e-9


class DataError(ValueError):
    """Malformed or insufficient trajectory data."""


@dataclass(frozen=True)
class TrajectoryData:
    """One recorded input/output/disturbance realization.

    Attributes:
        u: inputs, shape (T, n_u).
        y: outputs, shape (T, n_y).
        w: disturbances, shape (T, n_w).
    """

    u: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        arrs = []
        for name in ("u", "y", "w"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.ndim != 2:
                raise DataError(f"{name} must be a (T, n) array")
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs.append(a)
        lengths = {a.shape[0] for a in arrs}
        if len(lengths) != 1:
            raise DataError(f"u, y, w lengths differ: {[a.shape[0] for a in arrs]}")
        if arrs[0].shape[0] < 1:
            raise DataError("trajectory is empty")

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.u.shape[1], self.y.shape[1], self.w.shape[1]


@dataclass(frozen=True)
class HankelSystem:
    """Past/future Hankel blocks of order ``T_ini + N`` for u, y and w."""

    H_up: np.ndarray
    H_yp: np.ndarray
    H_wp: np.ndarray
    H_uf: np.ndarray
    H_yf: np.ndarray
    H_wf: np.ndarray
    T_ini: int
    N: int

    @property
    def n_cols(self) -> int:
        return self.H_up.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.H_uf.shape[0] // self.N, self.H_yf.shape[0] // self.N,
                self.H_wf.shape[0] // self.N)

    @property
    def H_p(self) -> np.ndarray:
        return np.vstack([self.H_up, self.H_yp, self.H_wp])

    @property
    def H_f(self) -> np.ndarray:
        return np.vstack([self.H_uf, self.H_yf, self.H_wf])


@dataclass(frozen=True)
class EmpiricalMoments:
    mean: np.ndarray
    cov: np.ndarray

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "EmpiricalMoments":
        return cls(np.asarray(obj["mean"], dtype=float),
                   np.atleast_2d(np.asarray(obj["cov"], dtype=float)))


@dataclass(frozen=True)
class PersistencyReport:
    order: int
    rank: int
    rows: int
    cols: int
    min_singular: float
    """Smallest singular value counted as nonzero (0.0 when the rank is 0)."""

    @property
    def ok(self) -> bool:
        return self.rank == self.rows

    def __bool__(self) -> bool:
        return self.ok


def load_trajectory(path, dims: tuple[int, int, int]) -> TrajectoryData:
    """Read a trajectory CSV with header ``t,u_0..,y_0..,w_0..``."""
    n_u, n_y, n_w = dims
    n_fields = 1 + n_u + n_y + n_w
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if len(header) != n_fields:
            raise DataError(
                f"{path}: header has {len(header)} fields, expected {n_fields}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_fields:
                raise DataError(
                    f"{path}:{lineno}: {len(row)} fields, expected {n_fields}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    return TrajectoryData(arr[:, 1:1 + n_u], arr[:, 1 + n_u:1 + n_u + n_y],
                          arr[:, 1 + n_u + n_y:])


def trajectory_header(dims: tuple[int, int, int]) -> list[str]:
    n_u, n_y, n_w = dims
    return (["t"] + [f"u_{i}" for i in range(n_u)] + [f"y_{i}" for i in range(n_y)]
            + [f"w_{i}" for i in range(n_w)])


def save_trajectory(data: TrajectoryData, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_header(data.dims))
        for t in range(data.T):
            vals = np.concatenate([data.u[t], data.y[t], data.w[t]])
            writer.writerow([t] + [repr(float(v)) for v in vals])


def build_hankel(v: np.ndarray, t: int) -> np.ndarray:
    """Block-Hankel matrix of order ``t``; column j stacks ``v_j, ..., v_{j+t-1}``."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    T, n = v.shape
    if t < 1:
        raise DataError("Hankel order must be >= 1")
    if t > T:
        raise DataError(f"Hankel order {t} exceeds sequence length {T}")
    cols = T - t + 1
    windows = np.lib.stride_tricks.sliding_window_view(v, (t, n))[:, 0]
    return windows.reshape(cols, t * n).T.copy()


def check_persistency(data: TrajectoryData, order: int) -> PersistencyReport:
    """Rank test of the Hankel matrix of the stacked (u, w) signal."""
    if order > data.T:
        raise DataError(f"trajectory of length {data.T} too short for order {order}")
    H = build_hankel(np.hstack([data.u, data.w]), order)
    sv = np.linalg.svd(H, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        rank, smin = 0, 0.0
    else:
        kept = sv[sv >= PE_RANK_TOL * sv[0]]
        rank, smin = kept.size, float(kept[-1])
    return PersistencyReport(order=order, rank=int(rank), rows=H.shape[0],
                             cols=H.shape[1], min_singular=smin)


def split_hankel(data: TrajectoryData, T_ini: int, N: int) -> HankelSystem:
    if N < 1:
        raise DataError("horizon N must be >= 1")
    if T_ini < 1:
        raise DataError("T_ini must be >= 1")
    L = T_ini + N
    if data.T < L:
        raise DataError(f"need at least T_ini + N = {L} samples, have {data.T}")
    blocks = {}
    for name in ("u", "y", "w"):
        sig = getattr(data, name)
        H = build_hankel(sig, L)
        cut = T_ini * sig.shape[1]
        blocks[f"H_{name}p"] = H[:cut]
        blocks[f"H_{name}f"] = H[cut:]
    for H in blocks.values():
        H.setflags(write=False)
    return HankelSystem(T_ini=T_ini, N=N, **blocks)


def estimate_moments(w: np.ndarray) -> EmpiricalMoments:
    """Sample mean and (n-1)-normalized, symmetrized sample covariance."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] < 2:
        raise DataError("need at least 2 samples to estimate a covariance")
    mean = w.mean(axis=0)
    S = np.atleast_2d(np.cov(w, rowvar=False, ddof=1))
    S = 0.5 * (S + S.T)
    lam = np.linalg.eigvalsh(S)
    if lam.min() <= 1e-12 * max(lam.max(), 1e-300):
        raise DataError(
            f"estimated covariance is not positive definite (min eigenvalue {lam.min():.3e})")
    return EmpiricalMoments(mean, S)


def save_moments(moments: EmpiricalMoments, path) -> None:
    Path(path).write_text(json.dumps(moments.to_json(), indent=2) + "\n")


def load_moments(path) -> EmpiricalMoments:
    return EmpiricalMoments.from_json(json.loads(Path(path).read_text()))
