"""End-to-end solve: displacements -> rotation edges -> headings -> positions."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .dataset import Dataset
from .measurements import invert_range_bearing, pairwise_relative_displacements
from .orientation_graph import (
    HeadingEstimate,
    OptimizationResult,
    OrientationGraph,
    chain_initial_guess,
    optimize_orientations,
    orientation_information,
)
from .position_solver import (
    GlobalLinearSystem,
    OdometryTranslation,
    SlamEstimate,
    assemble_global_system,
    solve_positions,
)
from .rotation_constraints import (
    LOOP_MAX_EDGES,
    LOOP_MIN_GAP,
    EdgeKind,
    RotationEdge,
    estimate_rotation_edges,
)

log = logging.getLogger(__name__)


@dataclass
class RfmResult:
    estimate: SlamEstimate
    headings: HeadingEstimate
    optimization: OptimizationResult
    edges: List[RotationEdge]
    system: GlobalLinearSystem = field(repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.optimization.converged

    @property
    def n_loop_closures(self) -> int:
        return sum(e.kind is EdgeKind.LOOP_CLOSURE for e in self.edges)


def run_rfm(
    dataset: Dataset,
    odo_translation_rows: bool = False,
    anchor_pose=(0.0, 0.0, 0.0),
    heading_covariance: bool = False,
    min_gap: int = LOOP_MIN_GAP,
    max_edges: int = LOOP_MAX_EDGES,
) -> RfmResult:
    """Run the full separated orientation/position solver on a dataset.

    Pose 0 is anchored at ``anchor_pose``. Landmarks that are never observed
    are left out of the estimate (``estimate.landmark_ids`` lists the rest).
    """
    timings = {}
    t0 = time.perf_counter()
    n = dataset.n_poses
    groups = dataset.observations_at()
    disp = [pairwise_relative_displacements(g, pose_id=k) for k, g in enumerate(groups)]
    visible = [[z.landmark_id for z in g] for g in groups]
    odo = [(o.dtheta, o.var_t) for o in dataset.odometry]
    timings["displacements"] = time.perf_counter() - t0

    t = time.perf_counter()
    edges = estimate_rotation_edges(disp, visible, odo, dataset.n_landmarks, min_gap, max_edges)
    graph = OrientationGraph.from_edges(n, edges)
    timings["rotation_edges"] = time.perf_counter() - t

    t = time.perf_counter()
    theta0 = chain_initial_guess(graph, anchor_pose[2])
    opt = optimize_orientations(graph, theta0, anchor=0, anchor_theta=anchor_pose[2])
    Omega, Sigma = orientation_information(graph, 0, with_covariance=heading_covariance)
    headings = HeadingEstimate(opt.theta, Omega, Sigma, 0)
    timings["orientation"] = time.perf_counter() - t
    if not opt.converged:
        log.warning(
            "orientation optimization stopped after %d iterations (|grad|=%.3g)",
            opt.iterations,
            opt.grad_norm,
        )

    t = time.perf_counter()
    observed = np.unique([z.landmark_id for z in dataset.observations]).astype(int)
    remap = np.full(dataset.n_landmarks, -1)
    remap[observed] = np.arange(len(observed))
    local = []
    for z in dataset.observations:
        f = invert_range_bearing(z)
        local.append(type(f)(f.pose_id, int(remap[f.landmark_id]), f.delta, f.cov))
    odo_rows = None
    if odo_translation_rows:
        odo_rows = [
            OdometryTranslation(
                o.from_id, o.to_id, np.array([o.dx, o.dy]), np.diag([o.var_x, o.var_y])
            )
            for o in dataset.odometry
        ]
    system = assemble_global_system(
        opt.theta, Omega, local, len(observed), odo_rows, anchor=0, anchor_pose=anchor_pose
    )
    est = solve_positions(system)
    est.landmark_ids = observed
    timings["positions"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t0
    return RfmResult(est, headings, opt, edges, system, timings)
