"""Planar feature SLAM that estimates headings first, then positions in closed form.

Typical use::

    from rfmslam import load_world, make_dataset, run_rfm, rmse_aligned

    ds = make_dataset(load_world("s1"), alpha=1, beta=1, seed=0)
    result = run_rfm(ds)
    rmse, _ = rmse_aligned(result.estimate.poses, ds.poses_gt)
"""

from .dataset import Dataset, NoiseSpec, OdometryRecord, SensorSpec
from .errors import (
    ConvergenceError,
    DatasetParseError,
    DatasetValidationError,
    DegenerateRotationError,
    DisconnectedGraphError,
    InvalidInputError,
    RankDeficiencyError,
    RfmSlamError,
    UnconstrainedRotationError,
)
from .evaluation import (
    EvalReport,
    aggregate,
    classify_catastrophic,
    evaluate_solver,
    rmse_aligned,
    sweep,
)
from .gauss_newton import GaussNewtonResult, gauss_newton_baseline
from .geometry import angle_from_params, dcm_from_angle, project_to_so2, wrap_angle
from .io import parse_dataset, parse_estimate, serialize_dataset, serialize_estimate
from .measurements import (
    LocalDisplacementSet,
    RangeBearing,
    invert_range_bearing,
    pairwise_relative_displacements,
)
from .orientation_graph import (
    OrientationGraph,
    chain_initial_guess,
    cost_and_gradient,
    optimize_orientations,
    orientation_information,
)
from .pipeline import RfmResult, run_rfm
from .position_solver import (
    GlobalLinearSystem,
    SlamEstimate,
    assemble_global_system,
    solution_covariance,
    solve_positions,
)
from .rotation_constraints import (
    EdgeKind,
    RotationEdge,
    build_relative_rotation_system,
    estimate_rotation_edges,
    solve_relative_rotation,
)
from .simulator import (
    BUILTIN_WORLDS,
    WorldSpec,
    baseline_odometry_trajectory,
    generate_map,
    load_world,
    make_dataset,
    simulate_run,
)

__version__ = "0.1.0"
