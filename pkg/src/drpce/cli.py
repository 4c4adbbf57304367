"""Command-line pipeline: ``drpce {gen-data,build,solve,simulate,reproduce}``.

Each stage reads and writes plain files so that intermediate artifacts can be
inspected on their own. Exit codes: 0 success, 2 configuration error, 3 data
or persistency error, 4 solver returned a non-optimal status, 5 internal
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, ambiguity, data, experiment, ocp, sim
from .conic.backends import BACKENDS, solve_with
from .conic.certify import check_certificate
from .conic.program import read_program, write_program
from .conic.solver import SolverSettings

logger = logging.getLogger("drpce")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4
EXIT_INTERNAL = 5

SEED_MAX = 2**64 - 1


class ConfigError(Exception):
    pass


class NonOptimal(Exception):
    pass


def seed_arg(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return v


def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return obj


def load_config(path) -> tuple[experiment.ExperimentConfig, dict]:
    """Parse the pipeline config; ``ocp`` may be inline or a relative path."""
    if path is None:
        return experiment.default_config(), {}
    raw = _read_json(path)
    if isinstance(raw.get("ocp"), str):
        ocp_path = Path(path).parent / raw["ocp"]
        raw = dict(raw, ocp=_read_json(ocp_path))
    try:
        cfg = experiment.ExperimentConfig.from_json(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.disturbance.n_w != cfg.spec.n_w:
        raise ConfigError(f"{path}: disturbance has {cfg.disturbance.n_w} channels, "
                          f"ocp expects {cfg.spec.n_w}")
    return cfg, raw


def _settings(args) -> SolverSettings:
    kw = {}
    if getattr(args, "solver_tol", None) is not None:
        kw.update(tol_gap=args.solver_tol, tol_feas=args.solver_tol)
    if getattr(args, "solver_max_iter", None) is not None:
        kw["max_iter"] = args.solver_max_iter
    return SolverSettings(**kw)


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    cfg, _ = load_config(args.config)
    order = cfg.model.n_x + cfg.spec.N + cfg.spec.T_ini
    seed = experiment.derive_seeds(args.seed)["data"]
    traj = sim.generate_experiment_data(cfg.model, cfg.disturbance, cfg.T, seed, order=order)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_trajectory(traj, out)
    logger.info("wrote %d samples to %s", traj.T, out)
    return EXIT_OK


def cmd_build(args) -> int:
    cfg, raw = load_config(args.config)
    spec = cfg.spec
    amb = dict(raw.get("ambiguity", {}))
    rho_bar = args.rho_bar if args.rho_bar is not None else float(amb.get("rho_bar", 0.0))
    s = args.samples if args.samples is not None else int(amb.get("s", 1))
    if rho_bar < 0 or s < 1:
        raise ConfigError("rho_bar must be >= 0 and s >= 1")
    if args.sampling_seed is not None:
        samp_seed = args.sampling_seed
    elif "seed" in amb:
        samp_seed = seed_arg(str(amb["seed"]))
    else:
        samp_seed = experiment.derive_seeds(args.seed)["sampling"]
    prune = args.prune_vertices or bool(amb.get("prune", False))

    traj = data.load_trajectory(args.data, (spec.n_u, spec.n_y, spec.n_w))
    n_x = cfg.model.n_x if "model" in raw or not raw else 0
    order = spec.T_ini + spec.N + n_x
    rep = data.check_persistency(traj, order)
    if not rep.ok:
        raise data.DataError(f"input/disturbance data is not persistently exciting of order "
                             f"{order} (rank {rep.rank}/{rep.rows})")
    H = data.split_hankel(traj, spec.T_ini, spec.N)
    moments = data.estimate_moments(traj.w)
    rho = ambiguity.radius_from_ratio(rho_bar, moments.mean, moments.cov)
    A = ambiguity.CoeffAmbiguity.from_moments(moments.mean, moments.cov, rho)
    V = ambiguity.sample_ambiguity(A, s, samp_seed)
    if prune:
        V = ambiguity.prune_to_vertices(V)
    P = ocp.build_ocp(H, spec, V)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_program(P, out / "program.socp")
    V.save(out / "vertices.json")
    data.save_moments(moments, out / "moments.json")
    logger.info("built program with %d vertices, %d variables", len(V), P.n)
    return EXIT_OK


def cmd_solve(args) -> int:
    path = Path(args.program)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    try:
        P = read_program(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    settings = _settings(args)
    res = solve_with(P, args.backend, settings)
    cert = check_certificate(P, res, settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = cert.to_json()
    report.update(backend=args.backend, iterations=res.iterations,
                  objective=None if not np.isfinite(res.objective) else res.objective,
                  residuals={k: float(v) for k, v in res.residuals.items()})
    _dump(report, out / "certificate.json")
    if not res.optimal:
        raise NonOptimal(f"solver finished with status {res.status.value}")
    if P.meta.get("N") is not None and "K_w" in P.layout:
        ocp.decode_policy(res.x, P).save(out / "policy.json")
    logger.info("status %s, objective %.10g", res.status.value, res.objective)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, _ = load_config(args.config)
    policy = ocp.Policy.load(args.policy)
    n_traj = args.n_traj if args.n_traj is not None else cfg.n_traj
    seed = experiment.derive_seeds(args.seed)["mc"]
    rep = sim.monte_carlo(cfg.model, policy, cfg.spec, cfg.disturbance, n_traj, seed,
                          keep_traces=args.traces is not None)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(experiment.TABLE_HEADER)
        wr.writerow([args.case, "" if args.rho_bar is None else repr(args.rho_bar),
                     "" if args.samples is None else args.samples, repr(rep.J),
                     rep.violations, rep.n_traj, args.seed])
    if args.traces is not None:
        rep.write_traces(args.traces)
    logger.info("J = %.4f (stderr %.4f), violations = %d / %d", rep.J, rep.cost_stderr,
                rep.violations, rep.evaluations)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg, _ = load_config(args.config)
    if args.full:
        cfg.rho_bars, cfg.s_values = experiment.FULL_GRID
    if args.prune_vertices:
        cfg.prune = True
    if args.n_traj is not None:
        cfg.n_traj = args.n_traj
    try:
        results = experiment.reproduce(cfg, args.seed, Path(args.out), jobs=args.jobs,
                                       settings=_settings(args))
    except experiment.StageError as exc:
        if isinstance(exc.cause, data.DataError):
            raise data.DataError(str(exc)) from exc
        raise
    for r in results:
        J = f"{r.report.J:.3f}" if r.report else "nan"
        V = r.report.violations if r.report else "-"
        logger.info("case %-3s rho_bar=%.1f s=%3d  J=%s  violations=%s", r.case, r.rho_bar,
                    r.s, J, V)
    bad = [r for r in results if r.status != "Optimal"]
    if bad:
        raise NonOptimal(f"{len(bad)} case(s) not solved to optimality")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drpce", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=seed_arg, default=0, help="64-bit unsigned master seed")
    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver-tol", type=_positive_float, help="gap and feasibility tolerance")
    solver.add_argument("--solver-max-iter", type=int, help="interior-point iteration cap")

    g = sub.add_parser("gen-data", parents=[seeded], help="record an excitation experiment")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True, help="trajectory CSV")
    g.set_defaults(func=cmd_gen_data)

    b = sub.add_parser("build", parents=[seeded], help="assemble the conic program")
    b.add_argument("--config", required=True)
    b.add_argument("--data", required=True, help="trajectory CSV")
    b.add_argument("--rho-bar", type=float)
    b.add_argument("--samples", "-s", type=int)
    b.add_argument("--sampling-seed", type=seed_arg)
    b.add_argument("--prune-vertices", action="store_true")
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("solve", parents=[solver], help="solve a program file")
    s.add_argument("--program", required=True)
    s.add_argument("--backend", choices=BACKENDS, default="internal")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", parents=[seeded], help="Monte Carlo evaluation of a policy")
    m.add_argument("--config", required=True)
    m.add_argument("--policy", required=True)
    m.add_argument("--n-traj", type=int)
    m.add_argument("--traces", help="optional per-step trace CSV")
    m.add_argument("--case", default="custom", help="label for the case column")
    m.add_argument("--rho-bar", type=float, help="label for the rho_bar column")
    m.add_argument("--samples", "-s", type=int, help="label for the s column")
    m.add_argument("--out", required=True, help="summary CSV")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reproduce", parents=[seeded, solver],
                       help="run the double-integrator benchmark end to end")
    r.add_argument("--config", help="optional config (defaults to the built-in benchmark)")
    r.add_argument("--out", default="results")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--full", action="store_true", help="complete rho_bar x s grid")
    r.add_argument("--prune-vertices", action="store_true")
    r.add_argument("--n-traj", type=int)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ocp.SpecError) as exc:
        print(f"drpce: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except data.DataError as exc:
        print(f"drpce: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonOptimal as exc:
        print(f"drpce: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal failure", exc_info=True)
        print(f"drpce: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
