"""Command-line interface: simulate, solve, eval, compare.

Exit codes: 0 on success, 2 for unreadable/invalid input, 3 when a solver
cannot produce an estimate (rank deficiency, disconnected or unconstrained
rotation graph, convergence failure).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .dataset import BASE_ODO, BASE_RB, NoiseSpec
from .errors import (
    ConvergenceError,
    DatasetParseError,
    DatasetValidationError,
    DegenerateRotationError,
    DisconnectedGraphError,
    InvalidInputError,
    RankDeficiencyError,
    UnconstrainedRotationError,
)
from .evaluation import (
    SOLVERS,
    aggregate,
    align_points,
    classify_catastrophic,
    evaluate_solver,
    rmse_aligned,
    sweep,
    write_reports,
    write_table,
)
from .pipeline import run_rfm
from .simulator import baseline_odometry_trajectory, generate_map, load_world, simulate_run

log = logging.getLogger("rfmslam")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
INPUT_ERRORS = (DatasetParseError, DatasetValidationError, InvalidInputError, OSError)
SOLVER_ERRORS = (
    RankDeficiencyError,
    DisconnectedGraphError,
    UnconstrainedRotationError,
    DegenerateRotationError,
    ConvergenceError,
)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def cmd_simulate(args) -> int:
    if args.seed < 0:
        raise InvalidInputError("seed must be a non-negative integer")
    world = load_world(args.map)
    noise = NoiseSpec(
        args.alpha,
        args.beta,
        base_odo=tuple(args.odo_sigma),
        base_rb=tuple(args.rb_sigma),
    )
    ds = simulate_run(generate_map(world), world, noise, args.seed)
    io.write_dataset(args.out, ds)
    log.info("wrote %d poses, %d landmarks, %d observations to %s",
             ds.n_poses, ds.n_landmarks, len(ds.observations), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    ds = io.read_dataset(args.data)
    res = run_rfm(ds, odo_translation_rows=args.odo_translation_rows)
    io.write_estimate(args.out, res.estimate)
    if not res.converged:
        log.warning("orientation optimization did not reach the gradient tolerance")
    if args.report:
        from .plotting import plot_trajectories

        rp, rt = rmse_aligned(res.estimate.poses, ds.poses_gt)
        row = {
            "n_poses": ds.n_poses,
            "n_landmarks_est": len(res.estimate.landmark_ids),
            "n_edges": len(res.edges),
            "n_loop_closures": res.n_loop_closures,
            "orientation_iterations": res.optimization.iterations,
            "orientation_converged": res.converged,
            "orientation_cost": f"{res.optimization.cost:.9g}",
            "rmse_position": f"{rp:.9g}",
            "rmse_heading": f"{rt:.9g}",
            "catastrophic": classify_catastrophic(rp, ds.trajectory_length()),
        }
        row.update({f"time_{k}": f"{v:.6g}" for k, v in res.timings.items()})
        with open(args.report, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            w.writeheader()
            w.writerow(row)
        plot_trajectories(
            _figure_path(args.report),
            ds.poses_gt,
            {"odometry": baseline_odometry_trajectory(ds), "rfm": res.estimate.poses},
            ds.landmarks_gt,
            title=f"RMSE {rp:.3f} m",
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    from .plotting import plot_position_errors, plot_trajectories

    est = io.read_estimate(args.estimate)
    ds = io.read_dataset(args.data)
    if len(est.p) != ds.n_poses:
        raise InvalidInputError(f"estimate has {len(est.p)} poses, dataset has {ds.n_poses}")
    rp, rt = rmse_aligned(est.poses, ds.poses_gt)
    length = ds.trajectory_length()
    row = {
        "n_poses": ds.n_poses,
        "trajectory_length": f"{length:.9g}",
        "rmse_position": f"{rp:.9g}",
        "rmse_heading": f"{rt:.9g}",
        "catastrophic": classify_catastrophic(rp, length),
    }
    if len(est.landmark_ids):
        if est.landmark_ids.max() >= ds.n_landmarks:
            raise InvalidInputError("estimate references landmarks missing from the dataset")
        lm = align_points(est.l, est.poses[0], ds.poses_gt[0])
        err = lm - ds.landmarks_gt[est.landmark_ids]
        row["rmse_landmark"] = f"{math.sqrt(float(np.mean(np.sum(err**2, axis=1)))):.9g}"
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
    fig = _figure_path(args.out)
    plot_trajectories(fig, ds.poses_gt, {"rfm": est.poses}, ds.landmarks_gt, title=f"RMSE {rp:.3f} m")
    plot_position_errors(fig.with_name(fig.stem + "_errors.png"), ds.poses_gt, {"rfm": est.poses})
    return EXIT_OK


def cmd_compare(args) -> int:
    from .plotting import plot_rmse_vs_beta, plot_trajectories

    ds = io.read_dataset(args.data)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for s in solvers:
        if s not in SOLVERS:
            raise InvalidInputError(f"unknown solver {s!r}; choose from {', '.join(SOLVERS)}")
    name = Path(args.data).stem
    sweeping = args.alphas is not None or args.betas is not None or args.runs is not None
    if sweeping:
        alphas = args.alphas or [ds.noise.alpha]
        betas = args.betas or [ds.noise.beta]
        runs = args.runs or 1

        def progress(a, b, i, rep):
            log.info("alpha=%g beta=%g run=%d %s rmse=%.4g", a, b, i, rep.solver, rep.rmse_position)

        rows = sweep(ds, name, alphas, betas, runs, solvers, args.seed, args.odo_translation_rows, progress)
        write_table(args.out, rows, solvers)
        plot_rmse_vs_beta(_figure_path(args.out), rows, title=name)
        return EXIT_OK

    reports = [evaluate_solver(ds, s, args.odo_translation_rows) for s in solvers]
    rows = [aggregate([r], name, ds.noise.alpha, ds.noise.beta) for r in reports]
    write_table(args.out, rows, solvers)
    write_reports(Path(args.out).with_name(Path(args.out).stem + "_runs.csv"), reports)
    estimates = {"odometry": baseline_odometry_trajectory(ds)}
    estimates.update({r.solver: r.poses for r in reports if r.poses is not None})
    plot_trajectories(_figure_path(args.out), ds.poses_gt, estimates, ds.landmarks_gt, title=name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfmslam", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a noisy dataset")
    s.add_argument("--map", default="m1", help="m1, m2, s1 or a world .toml file")
    s.add_argument("--alpha", type=float, default=1.0, help="odometry noise scale")
    s.add_argument("--beta", type=float, default=1.0, help="range-bearing noise scale")
    s.add_argument("--seed", type=int, default=0, help="noise seed")
    s.add_argument("--odo-sigma", type=float, nargs=3, default=BASE_ODO,
                   metavar=("SX_M", "SY_M", "ST_DEG"), help="base odometry sigmas")
    s.add_argument("--rb-sigma", type=float, nargs=2, default=BASE_RB,
                   metavar=("SR_M", "SB_DEG"), help="base range-bearing sigmas")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="run the separated orientation/position solver")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--odo-translation-rows", action="store_true",
                   help="add odometry translations to the position solve")
    s.add_argument("--report", help="CSV summary; a trajectory figure is written next to it")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="score an estimate against a dataset's ground truth")
    s.add_argument("estimate")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("compare", help="compare solvers on a dataset or a noise sweep")
    s.add_argument("data")
    s.add_argument("--solvers", default=",".join(SOLVERS))
    s.add_argument("--out", required=True)
    s.add_argument("--alphas", type=_floats)
    s.add_argument("--betas", type=_floats)
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int, default=0, help="first noise seed of a sweep")
    s.add_argument("--odo-translation-rows", action="store_true")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
