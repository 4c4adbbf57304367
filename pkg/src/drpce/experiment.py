"""Double-integrator benchmark: robust, optimistic and ideal policies compared
by Monte Carlo cost and constraint-violation counts."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ambiguity, data, ocp, pce, sim
from .conic.solver import SolveResult, SolverSettings, solve

logger = logging.getLogger(__name__)

TABLE_HEADER = ["case", "rho_bar", "s", "J", "violations", "n_traj", "seed"]
DEFAULT_GRID = ((0.1, 0.5), (10, 50))
FULL_GRID = ((0.1, 0.3, 0.5, 0.7), (10, 50, 100))
TRACE_CELL = (0.5, 50)


class StageError(RuntimeError):
    """Failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    """Everything needed to regenerate the benchmark table.

    ``ideal_mean``/``ideal_cov`` feed the ideal case; by default they are the
    nominal moments quoted for the mixture, which are larger than the moments
    the mixture actually has (see README).
    """

    model: sim.LtiModel
    disturbance: sim.DisturbanceModel
    spec: ocp.OcpSpec
    T: int = 70
    n_traj: int = 1000
    ideal_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    ideal_cov: np.ndarray = field(default_factory=lambda: np.array([[0.03, 0.02],
                                                                    [0.02, 0.03]]))
    rho_bars: tuple = DEFAULT_GRID[0]
    s_values: tuple = DEFAULT_GRID[1]
    prune: bool = False

    def to_json(self) -> dict:
        return {"model": self.model.to_json(), "disturbance": self.disturbance.to_json(),
                "ocp": self.spec.to_json(), "T": self.T, "n_traj": self.n_traj,
                "ideal_moments": {"mean": np.asarray(self.ideal_mean).tolist(),
                                  "cov": np.asarray(self.ideal_cov).tolist()},
                "rho_bars": list(self.rho_bars), "s_values": list(self.s_values),
                "prune": self.prune}

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        base = default_config()
        ideal = obj.get("ideal_moments", {})
        return cls(
            model=sim.LtiModel.from_json(obj["model"]) if "model" in obj else base.model,
            disturbance=(sim.DisturbanceModel.from_json(obj["disturbance"])
                         if "disturbance" in obj else base.disturbance),
            spec=ocp.OcpSpec.from_json(obj["ocp"]) if "ocp" in obj else base.spec,
            T=int(obj.get("T", base.T)),
            n_traj=int(obj.get("n_traj", base.n_traj)),
            ideal_mean=np.asarray(ideal.get("mean", base.ideal_mean), dtype=float),
            ideal_cov=np.atleast_2d(np.asarray(ideal.get("cov", base.ideal_cov), dtype=float)),
            rho_bars=tuple(obj.get("rho_bars", base.rho_bars)),
            s_values=tuple(int(s) for s in obj.get("s_values", base.s_values)),
            prune=bool(obj.get("prune", False)),
        )


def double_integrator() -> sim.LtiModel:
    return sim.LtiModel(A=[[1.0, 1.0], [0.0, 1.0]], B=[[0.5], [1.0]], C=[[1.0, 0.0]],
                        D=[[0.0]], E=np.eye(2), F=np.zeros((1, 2)))


def mixture_disturbance() -> sim.DisturbanceModel:
    return sim.DisturbanceModel("gaussian_mixture", {
        "weights": [0.5, 0.5],
        "means": [[0.1, 0.1], [-0.1, -0.1]],
        "covs": [0.01 * np.eye(2), 0.01 * np.eye(2)],
    })


def default_spec(position: float = 3.0) -> ocp.OcpSpec:
    """Horizon 10, unit weights, ``|u| <= 0.5`` each with probability 0.8.

    The initial window holds the plant at rest at ``position``.
    """
    return ocp.OcpSpec(
        N=10, T_ini=2, Q=np.eye(1), R=np.eye(1),
        input_halfspaces=np.array([[2.0], [-2.0]]), output_halfspaces=np.zeros((0, 1)),
        eps_u=0.2, eps_y=0.5,
        init_u=np.zeros((2, 1)), init_y=np.full((2, 1), position), init_w=np.zeros((2, 2)),
    )


def default_config() -> ExperimentConfig:
    return ExperimentConfig(double_integrator(), mixture_disturbance(), default_spec())


def derive_seeds(seed: int) -> dict:
    """Independent 32-bit streams for data, vertex sampling and Monte Carlo."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("data", "sampling", "mc")
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


@dataclass
class CaseResult:
    case: str
    rho_bar: float
    s: int
    retained: int
    alpha: float
    status: str
    report: sim.McReport | None

    def row(self, seed) -> list:
        r = self.report
        return [self.case, repr(float(self.rho_bar)), self.s,
                repr(r.J) if r else "nan", r.violations if r else "", r.n_traj if r else "",
                seed]


def prepare(cfg: ExperimentConfig, seed: int):
    """Record data, build Hankel blocks and estimate the disturbance moments."""
    seeds = derive_seeds(seed)
    spec = cfg.spec
    order = cfg.model.n_x + spec.N + spec.T_ini
    traj = sim.generate_experiment_data(cfg.model, cfg.disturbance, cfg.T, seeds["data"],
                                        order=order)
    H = data.split_hankel(traj, spec.T_ini, spec.N)
    moments = data.estimate_moments(traj.w)
    return traj, H, moments, seeds


def case_vertices(case: str, moments: data.EmpiricalMoments, cfg: ExperimentConfig,
                  rho_bar: float = 0.0, s: int = 1, seed: int = 0) -> ambiguity.VertexSet:
    if case == "I":
        rho = ambiguity.radius_from_ratio(rho_bar, moments.mean, moments.cov)
        A = ambiguity.CoeffAmbiguity.from_moments(moments.mean, moments.cov, rho)
        V = ambiguity.sample_ambiguity(A, s, seed)
        return ambiguity.prune_to_vertices(V) if cfg.prune else V
    if case == "II":
        W = pce.disturbance_coeffs(moments.mean, moments.cov, moments.cov)
    elif case == "III":
        W = pce.disturbance_coeffs(cfg.ideal_mean, cfg.ideal_cov, cfg.ideal_cov)
    else:
        raise ValueError(f"unknown case {case!r}")
    return ambiguity.VertexSet([W], seed=None, s=1)


def run_case(job) -> CaseResult:
    """Build, solve and simulate one table cell (picklable for worker pools)."""
    case, rho_bar, s, cfg, H, moments, seeds, settings, keep = job
    V = case_vertices(case, moments, cfg, rho_bar, s, seeds["sampling"])
    P = ocp.build_ocp(H, cfg.spec, V)
    res: SolveResult = solve(P, settings)
    if not res.optimal:
        logger.warning("case %s (rho_bar=%s, s=%d): solver status %s", case, rho_bar, s,
                       res.status.value)
        return CaseResult(case, rho_bar, s, len(V), float("nan"), res.status.value, None)
    policy = ocp.decode_policy(res.x, P)
    rep = sim.monte_carlo(cfg.model, policy, cfg.spec, cfg.disturbance, cfg.n_traj,
                          seeds["mc"], keep_traces=keep)
    return CaseResult(case, rho_bar, s, len(V), policy.alpha, res.status.value, rep)


def reproduce(cfg: ExperimentConfig, seed: int, out_dir=None, jobs: int = 1,
              settings: SolverSettings | None = None) -> list[CaseResult]:
    """Run every cell of the grid plus the optimistic and ideal cases.

    Writes ``table.csv`` and trace CSVs into ``out_dir`` when given.
    """
    settings = settings or SolverSettings()
    try:
        _, H, moments, seeds = prepare(cfg, seed)
    except data.DataError as exc:
        raise StageError("data", exc) from exc
    jobs_list = []
    for s in cfg.s_values:
        for rb in cfg.rho_bars:
            keep = (rb, s) == TRACE_CELL
            jobs_list.append(("I", rb, s, cfg, H, moments, seeds, settings, keep))
    jobs_list.append(("II", 0.0, 1, cfg, H, moments, seeds, settings, True))
    jobs_list.append(("III", 0.0, 1, cfg, H, moments, seeds, settings, True))
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(run_case, jobs_list))
        else:
            results = [run_case(j) for j in jobs_list]
    except Exception as exc:
        raise StageError("solve/simulate", exc) from exc
    if out_dir is not None:
        write_outputs(results, seed, Path(out_dir))
    return results


def write_outputs(results: list[CaseResult], seed: int, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "table.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TABLE_HEADER)
        for r in results:
            wr.writerow(r.row(seed))
    for r in results:
        if r.report is not None and r.report.traces is not None:
            name = (f"traces_case{r.case}.csv" if r.case != "I"
                    else f"traces_caseI_rho{r.rho_bar:g}_s{r.s}.csv")
            r.report.write_traces(out_dir / name)


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
