"""Error metrics, failure classification and solver sweeps."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .dataset import Dataset, NoiseSpec
from .errors import InvalidInputError, RfmSlamError
from .gauss_newton import gauss_newton_baseline
from .geometry import rotate, wrap_angle
from .pipeline import run_rfm
from .simulator import resimulate

log = logging.getLogger(__name__)

CATASTROPHIC_FRACTION = 0.10
SOLVERS = ("rfm", "gn")


def align_to_anchor(estimate: np.ndarray, truth: np.ndarray, anchor: int = 0) -> np.ndarray:
    """Rigidly move ``estimate`` (n x 3 poses) so its anchor pose equals the truth's."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    dth = tru[anchor, 2] - est[anchor, 2]
    xy = rotate(dth, est[:, :2] - est[anchor, :2]) + tru[anchor, :2]
    return np.column_stack([xy, wrap_angle(est[:, 2] + dth)])


def align_points(points: np.ndarray, estimate_anchor, truth_anchor) -> np.ndarray:
    """Apply the anchor alignment of ``align_to_anchor`` to landmark positions."""
    dth = truth_anchor[2] - estimate_anchor[2]
    return rotate(dth, np.asarray(points, dtype=float) - estimate_anchor[:2]) + truth_anchor[:2]


def rmse_aligned(estimate, ground_truth, align: str = "anchor-only"):
    """Position and heading RMSE over all poses.

    ``align="anchor-only"`` first moves the estimate rigidly so pose 0
    coincides with the truth; ``"none"`` compares raw coordinates.
    """
    est = np.asarray(estimate, dtype=float).reshape(-1, 3)
    tru = np.asarray(ground_truth, dtype=float).reshape(-1, 3)
    if est.shape != tru.shape:
        raise InvalidInputError(f"pose count mismatch: {len(est)} vs {len(tru)}")
    if align == "anchor-only":
        est = align_to_anchor(est, tru)
    elif align != "none":
        raise InvalidInputError(f"unknown alignment {align!r}")
    dp = est[:, :2] - tru[:, :2]
    rmse_p = math.sqrt(float(np.mean(np.sum(dp**2, axis=1))))
    rmse_t = math.sqrt(float(np.mean(wrap_angle(est[:, 2] - tru[:, 2]) ** 2)))
    return rmse_p, rmse_t


def classify_catastrophic(
    rmse_position: float, trajectory_length: float, fraction: float = CATASTROPHIC_FRACTION
) -> bool:
    return rmse_position > fraction * trajectory_length


@dataclass
class EvalReport:
    solver: str
    rmse_position: float
    rmse_heading: float
    catastrophic: bool
    converged: bool
    iterations: int
    wall_time: float
    error: str = ""
    poses: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


@dataclass
class AggregateRow:
    map: str
    alpha: float
    beta: float
    solver: str
    runs: int
    mean_rmse: float
    std_rmse: float
    catastrophic: int
    no_convergence: int
    rmse_values: List[float] = field(default_factory=list, repr=False)


def evaluate_solver(dataset: Dataset, solver: str, odo_translation_rows: bool = False) -> EvalReport:
    """Run one solver on one dataset and score it against the ground truth."""
    t0 = time.perf_counter()
    truth = dataset.poses_gt
    length = dataset.trajectory_length()
    try:
        if solver == "rfm":
            res = run_rfm(dataset, odo_translation_rows=odo_translation_rows)
            poses, converged, iters = res.estimate.poses, res.converged, res.optimization.iterations
        elif solver == "gn":
            res = gauss_newton_baseline(dataset)
            poses, converged, iters = res.estimate.poses, res.converged, res.iterations
        else:
            raise InvalidInputError(f"unknown solver {solver!r}")
    except RfmSlamError as exc:
        if isinstance(exc, InvalidInputError):
            raise
        wall = time.perf_counter() - t0
        return EvalReport(solver, math.nan, math.nan, False, False, 0, wall, str(exc))
    wall = time.perf_counter() - t0
    rp, rt = rmse_aligned(poses, truth)
    return EvalReport(
        solver, rp, rt, classify_catastrophic(rp, length), converged, iters, wall, poses=poses
    )


def aggregate(reports: Sequence[EvalReport], map_name: str, alpha: float, beta: float) -> AggregateRow:
    """Mean RMSE over converged runs plus failure and no-convergence counts."""
    solver = reports[0].solver if reports else ""
    ok = [r.rmse_position for r in reports if r.converged and math.isfinite(r.rmse_position)]
    mean = float(np.mean(ok)) if ok else math.nan
    std = float(np.std(ok, ddof=1)) if len(ok) > 1 else math.nan
    return AggregateRow(
        map_name,
        alpha,
        beta,
        solver,
        len(reports),
        mean,
        std,
        sum(r.catastrophic for r in reports),
        sum(not r.converged for r in reports),
        ok,
    )


def sweep(
    template: Dataset,
    world_name: str,
    alphas: Iterable[float],
    betas: Iterable[float],
    runs: int,
    solvers: Sequence[str] = SOLVERS,
    base_seed: int = 0,
    odo_translation_rows: bool = False,
    progress=None,
) -> List[AggregateRow]:
    """Re-simulate noise on a fixed world and score every solver.

    The template's ground-truth trajectory, landmarks and sensor limits are
    kept; run ``i`` uses noise seed ``base_seed + i`` at every noise level.
    """
    rows = []
    for alpha in alphas:
        for beta in betas:
            per_solver: Dict[str, List[EvalReport]] = {s: [] for s in solvers}
            for i in range(runs):
                ds = resimulate(template, NoiseSpec(alpha, beta), base_seed + i)
                for s in solvers:
                    rep = evaluate_solver(ds, s, odo_translation_rows)
                    per_solver[s].append(rep)
                    if progress:
                        progress(alpha, beta, i, rep)
            for s in solvers:
                rows.append(aggregate(per_solver[s], world_name, alpha, beta))
    return rows


TABLE_FIELDS = ("map", "alpha", "beta")


def write_table(path, rows: Sequence[AggregateRow], solvers: Sequence[str]) -> None:
    """One line per (map, alpha, beta) with per-solver RMSE/failure columns."""
    keyed: Dict[tuple, Dict[str, AggregateRow]] = {}
    for r in rows:
        keyed.setdefault((r.map, r.alpha, r.beta), {})[r.solver] = r
    header = list(TABLE_FIELDS)
    for s in solvers:
        header += [f"{s}_mean_rmse", f"{s}_std_rmse", f"{s}_catastrophic", f"{s}_no_convergence", f"{s}_runs"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for (m, a, b), per in keyed.items():
            line = [m, _num(a), _num(b)]
            for s in solvers:
                r = per.get(s)
                if r is None:
                    line += ["", "", "", "", ""]
                else:
                    line += [_num(r.mean_rmse), _num(r.std_rmse), r.catastrophic, r.no_convergence, r.runs]
            w.writerow(line)


REPORT_FIELDS = tuple(f for f in EvalReport.__dataclass_fields__ if f != "poses")


def write_reports(path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for r in reports:
            w.writerow({k: _num(getattr(r, k)) for k in REPORT_FIELDS})


def _num(v) -> str:
    return f"{v:.9g}" if isinstance(v, float) else str(v)
