"""Command-line interface.

Exit codes: 0 success, 2 config/validation, 3 numerical failure,
4 identifiability failure, 5 I/O.
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import storage
from .errors import ConfigError, InvLQGError, ValidationError
from .experiments import (
    METRICS,
    ROW_FIELDS,
    StudyConfig,
    benchmark_costs,
    benchmark_game,
    benchmark_noise,
    envelope_coverage,
    envelope_table,
    run_batch_study,
    study_averages,
    trajectory_errors,
)
from .model import validate
from .pipeline import invert
from .riccati import RiccatiSolverConfig, check_stability, solve_coupled_riccati
from .simulate import SimulationConfig, empirical_moments, simulate_bundle

log = logging.getLogger("invlqg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IDENT, EXIT_IO = 0, 2, 3, 4, 5


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"[{stage}] {exc}")


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, etype, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(
            exc, (InvLQGError, OSError, ValueError)
        ):
            raise StageError(self.name, exc) from exc
        return False


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _solver_cfg(cfg, args):
    solver = cfg.get("solver", {}) if isinstance(cfg, dict) else {}
    integrator = getattr(args, "integrator", None) or solver.get("integrator", "rk4")
    substeps = getattr(args, "substeps", None) or solver.get("substeps", 10)
    return RiccatiSolverConfig(integrator=integrator, substeps=substeps)


def _forward_setup(path, args):
    with _Stage("config"):
        cfg = storage.load_config(path)
        game = storage.game_from_config(cfg)
        costs = storage.costs_from_config(cfg)
        noise = storage.noise_from_config(cfg, game.dt) if "L" in cfg.get("system", {}) else None
    with _Stage("validate"):
        report = validate(game, costs, noise)
        if not report.ok:
            raise ValidationError(report.violations)
    with _Stage("solve"):
        profile = solve_coupled_riccati(game, costs, _solver_cfg(cfg, args))
    return cfg, game, costs, noise, profile


def cmd_forward(args):
    cfg, game, costs, noise, profile = _forward_setup(args.config, args)
    out = Path(args.out)
    report = check_stability(profile)
    with _Stage("io"):
        storage.write_profile_csv(out / "strategy.csv", profile)
        storage.write_stability_csv(out / "stability.csv", report)
        storage.write_json(
            out / "stability.json",
            {
                "stable": report.stable,
                "unstable_nodes": int(report.unstable_nodes.size),
                "first_unstable_time": report.first_unstable_time,
                "max_real_part": float(report.max_real.max()),
                "transition_norm": report.transition_norm,
            },
        )
    print(f"stable: {str(report.stable).lower()}")
    if not report.stable:
        print(
            f"unstable nodes: {report.unstable_nodes.size} of {report.t.size} "
            f"(from t={report.first_unstable_time:.6g})"
        )
    print(f"transition norm: {report.transition_norm:.6g}")
    return EXIT_OK


def cmd_simulate(args):
    cfg, game, costs, noise, profile = _forward_setup(args.config, args)
    if noise is None:
        raise StageError("config", ConfigError("system.L is required for simulation"))
    sim = cfg.get("simulation", {})
    D = args.demos if args.demos is not None else sim.get("D", 20)
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    with _Stage("config"):
        sim_cfg = SimulationConfig(D=D, seed=seed, rng=sim.get("rng", "philox"))
    with _Stage("simulate"):
        bundle = simulate_bundle(game, profile, noise, sim_cfg)
    with _Stage("io"):
        manifest = storage.write_bundle(
            args.out,
            bundle,
            extra={"config_hash": storage.config_hash(cfg), "rng": sim_cfg.rng},
        )
    print(f"wrote {manifest['D']} demonstrations ({manifest['rows']} rows each) to {args.out}")
    return EXIT_OK


def cmd_invert(args):
    with _Stage("config"):
        # only the observable system description is read; costs and L are never touched
        cfg = storage.system_view(storage.load_config(args.config))
        game = storage.game_from_config(cfg)
    with _Stage("io"):
        bundle = storage.read_bundle(args.bundle)
    with _Stage("invert"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = invert(
            bundle,
            game,
            args.nodes,
            cond_threshold=args.cond_threshold,
            rank_rtol=args.rank_rtol,
        )
    for w in caught:
        log.warning("%s", w.message)
    out = Path(args.out)
    est = result.noise
    report = {
        "t_C": result.t_C,
        "nodes": int(result.nodes.size),
        "excitation": {
            "flagged": result.excitation.n_flagged,
            "backfilled": int(result.excitation.backfilled.sum()),
            "threshold": result.excitation.threshold,
        },
        "players": [
            {
                "rank": d.rank,
                "nullity": d.nullity,
                "rank_ok": d.rank_ok,
                "gap_ratio": d.gap_ratio,
                "residual": d.residual,
                "violations": rec.violations,
                "clipped": rec.clipped,
            }
            for d, rec in zip(result.cost_id.diagnostics, result.cost_id.recovered)
        ],
        "noise": {
            "l": est.noise.l.tolist(),
            "offdiagonal_ratio": est.mismatch,
            "samples": est.samples,
        },
        "warnings": [str(w.message) for w in caught],
    }
    with _Stage("io"):
        storage.write_json(
            out / "estimate.json", storage.config_document(game, result.costs, est.noise)
        )
        storage.write_json(out / "report.json", report)
        storage.write_excitation_csv(out / "excitation.csv", result.excitation)
        for i, system in enumerate(result.cost_id.systems):
            storage.write_singular_values_csv(
                out / f"singular_values_player{i + 1}.csv", system.singular_values
            )
    for i, d in enumerate(result.cost_id.diagnostics):
        print(f"player {i + 1}: rank {d.rank}, gap ratio {d.gap_ratio:.4g}")
    print("L_hat: diag(" + ", ".join(f"{v:.6g}" for v in est.noise.l) + ")")
    print(f"t_C: {result.t_C:.4f} s")
    return EXIT_OK


def _study_setup(args):
    if args.config is None:
        game = benchmark_game()
        cfg = storage.config_document(game, benchmark_costs(), benchmark_noise(game.dt))
    else:
        cfg = storage.load_config(args.config)
    game = storage.game_from_config(cfg)
    costs = storage.costs_from_config(cfg)
    noise = storage.noise_from_config(cfg, game.dt)
    report = validate(game, costs, noise)
    if not report.ok:
        raise ValidationError(report.violations)
    st = cfg.get("study", {})
    study = StudyConfig(
        K_values=tuple(args.K or st.get("K", (20, 50, 100, 500))),
        D=args.demos or st.get("D", cfg.get("simulation", {}).get("D", 20)),
        repetitions=args.reps or st.get("repetitions", 10),
        base_seed=args.seed if args.seed is not None else st.get("base_seed", 0),
        threads=args.threads,
        estimation_seeds=args.estimation_seeds or st.get("estimation_seeds", "common"),
        solver=_solver_cfg(cfg, args),
    )
    return cfg, game, costs, noise, study


def cmd_study(args):
    with _Stage("config"):
        cfg, game, costs, noise, study = _study_setup(args)
    out = Path(args.out)
    rows_path = out / "study_rows.csv"
    manifest_path = out / "study_manifest.json"
    key = {
        "config_hash": storage.config_hash(cfg),
        "K": list(study.K_values),
        "D": study.D,
        "base_seed": study.base_seed,
        "estimation_seeds": study.estimation_seeds,
        "solver": {"integrator": study.solver.integrator, "substeps": study.solver.substeps},
    }
    previous = []
    with _Stage("io"):
        if manifest_path.exists() and rows_path.exists():
            import json

            old = json.loads(manifest_path.read_text())
            if old.get("key") == key:
                previous = [r for r in storage.read_rows_csv(rows_path) if r["status"] == "ok"]
                for r in previous:
                    r["K"], r["rep"] = int(r["K"]), int(r["rep"])
                previous = [r for r in previous if r["rep"] < study.repetitions]
        storage.write_json(manifest_path, {"key": key, "repetitions": study.repetitions})
    rows = list(previous)

    def on_row(row):
        rows.append(row)
        storage.write_rows_csv(rows_path, ROW_FIELDS, sorted(rows, key=lambda r: (r["K"], r["rep"])))

    completed = [(r["K"], r["rep"]) for r in previous]
    if previous:
        log.info("resuming: %d (K, rep) pairs already complete", len(previous))
    with _Stage("study"):
        run_batch_study(study, game, costs, noise, completed=completed, on_row=on_row)
    rows.sort(key=lambda r: (r["K"], r["rep"]))
    averages = study_averages(rows, study.K_values)
    with _Stage("io"):
        storage.write_rows_csv(rows_path, ROW_FIELDS, rows)
        storage.write_rows_csv(
            out / "study_averages.csv", ("K",) + METRICS + ("t_C", "n_ok", "n_failed"), averages
        )
    print("K," + ",".join(METRICS) + ",t_C,n_ok,n_failed")
    for a in averages:
        vals = ",".join(f"{a[m]:.6g}" for m in METRICS + ("t_C",))
        print(f"{a['K']},{vals},{a['n_ok']},{a['n_failed']}")
    return EXIT_OK


def cmd_metrics(args):
    with _Stage("io"):
        gt = storage.read_bundle(args.gt)
        est = storage.read_bundle(args.est)
    with _Stage("metrics"):
        gm, em = empirical_moments(gt), empirical_moments(est)
        rep = trajectory_errors(gm, em)
        coverage = envelope_coverage(gm, em)
        header, table = envelope_table(gm, em)
    out = Path(args.out)
    result = {m: getattr(rep, m) for m in METRICS}
    result["envelope_coverage"] = coverage
    with _Stage("io"):
        storage.write_json(out / "metrics.json", result)
        storage._write_table(out / "envelopes.csv", header, table)
    for k, v in result.items():
        print(f"{k}: {v:.6g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="invlqg", description="Forward and inverse finite-horizon LQG differential games."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=_positive_int, default=1, help="parallelism cap")
    sub = parser.add_subparsers(dest="command", required=True)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--integrator", choices=("rk4", "euler"))
    solver.add_argument("--substeps", type=_positive_int)

    p = sub.add_parser("forward", parents=[common, solver], help="solve the coupled Riccati equations")
    p.add_argument("config")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("simulate", parents=[common, solver], help="generate demonstrations")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--demos", type=_positive_int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("invert", parents=[common], help="identify costs and noise from demonstrations")
    p.add_argument("bundle", help="directory written by 'simulate'")
    p.add_argument("config", help="config providing system.A, system.B and horizon")
    p.add_argument("--nodes", type=_positive_int, help="number of evaluation nodes K")
    p.add_argument("--cond-threshold", type=float, default=1e8)
    p.add_argument("--rank-rtol", type=float, default=1e-5)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("study", parents=[common, solver], help="repeated identification study")
    p.add_argument("config", nargs="?", help="study config (default: built-in two-player game)")
    p.add_argument("--reps", type=_positive_int)
    p.add_argument("--K", type=_positive_int, nargs="+")
    p.add_argument("--demos", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--estimation-seeds", choices=("common", "fresh"))
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("metrics", parents=[common], help="compare two bundles")
    p.add_argument("gt")
    p.add_argument("est")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except StageError as err:
        exc = err.exc
        if isinstance(exc, InvLQGError):
            code = exc.exit_code
        elif isinstance(exc, OSError):
            code = EXIT_IO
        else:
            code = EXIT_CONFIG
        print(f"error [{err.stage}]: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
