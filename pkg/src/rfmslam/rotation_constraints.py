"""Linear relative-rotation estimation between pairs of poses.

Each pose pair ``(p, q)`` that sees common landmark pairs gives rows
``d_p = B(d_q) c`` in the unknown ``c = [cos dtheta, sin dtheta]``.
Successive poses additionally stack the odometry heading increment as a
direct measurement of ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DegenerateRotationError, InvalidInputError, UnconstrainedRotationError
from .geometry import RotParams2, angle_from_params, dcm_from_angle, project_to_so2, wrap_angle
from .measurements import LocalDisplacementSet, common_pairs, spanning_common_pairs

MAX_CONDITION = 1e12
PINV_RTOL = 1e-10
LOOP_MIN_GAP = 10
LOOP_MAX_EDGES = 5


class EdgeKind(str, Enum):
    ODOMETRY = "odometry-fused"
    LOOP_CLOSURE = "loop-closure"


@dataclass(frozen=True)
class RotationEdge:
    from_pose: int
    to_pose: int
    delta_theta: float
    var: float
    kind: EdgeKind = EdgeKind.ODOMETRY

    def __post_init__(self):
        if self.from_pose == self.to_pose:
            raise InvalidInputError("rotation edge endpoints must differ")
        if not self.var > 0:
            raise InvalidInputError(f"edge variance must be positive, got {self.var}")


@dataclass(frozen=True)
class RelRotSystem:
    z: np.ndarray
    B: np.ndarray
    R: np.ndarray
    from_pose: int = 0
    to_pose: int = 1
    kind: EdgeKind = EdgeKind.ODOMETRY
    has_odometry: bool = False


def design_block(d_q: np.ndarray) -> np.ndarray:
    """Rows of ``B`` for one displacement seen from pose q."""
    x, y = d_q
    return np.array([[x, -y], [y, x]])


def odometry_param_covariance(dtheta: float, var: float) -> np.ndarray:
    """Covariance of ``[cos, sin](dtheta)`` for a noisy heading increment.

    The tangential part is the first-order propagation of ``var``. The
    radial part is the exact second-order variance ``var**2 / 2`` of
    ``cos(noise)``; without it the block is rank one and cannot be inverted.
    """
    g = np.array([-math.sin(dtheta), math.cos(dtheta)])
    u = np.array([math.cos(dtheta), math.sin(dtheta)])
    return var * np.outer(g, g) + 0.5 * var**2 * np.outer(u, u)


def build_relative_rotation_system(
    dp: LocalDisplacementSet,
    dq: LocalDisplacementSet,
    C_init: np.ndarray,
    odo: Optional[tuple] = None,
    kind: Optional[EdgeKind] = None,
    all_pairs: bool = False,
) -> RelRotSystem:
    """Stack odometry (optional) and common-pair rows into one linear system.

    ``odo`` is ``(dtheta, variance)`` of the heading increment from p to q.
    With ``all_pairs`` every common landmark pair contributes rows; the
    stacked covariance is then singular (n landmarks carry only 2(n-1)
    independent displacement dimensions). The default keeps a spanning
    subset, which yields the identical estimate at a fraction of the cost.
    """
    ia, ib = (common_pairs if all_pairs else spanning_common_pairs)(dp, dq)
    if len(ia) == 0 and odo is None:
        raise UnconstrainedRotationError(
            f"poses {dp.pose_id} and {dq.pose_id} share no landmark pair and have no odometry"
        )
    C_init = np.asarray(C_init, dtype=float)
    rp, rq = dp.rows(ia), dq.rows(ib)
    d_p = dp.d[rp]
    d_q = dq.d[rq].reshape(-1, 2)
    npair = len(ia)

    B_feat = np.empty((2 * npair, 2))
    B_feat[0::2, 0] = d_q[:, 0]
    B_feat[0::2, 1] = -d_q[:, 1]
    B_feat[1::2, 0] = d_q[:, 1]
    B_feat[1::2, 1] = d_q[:, 0]

    # R'_p + C R'_q C^T over the common pairs
    Rq = dq.pair_cov(ib).reshape(npair, 2, npair, 2)
    Rq_rot = np.einsum("ab,ibjd,cd->iajc", C_init, Rq, C_init).reshape(2 * npair, 2 * npair)
    R_feat = dp.pair_cov(ia) + Rq_rot

    if odo is not None:
        dth, var = odo
        z = np.concatenate([[math.cos(dth), math.sin(dth)], d_p])
        B = np.vstack([np.eye(2), B_feat])
        R = scipy.linalg.block_diag(odometry_param_covariance(dth, var), R_feat)
    else:
        z, B, R = d_p.copy(), B_feat, R_feat
    if kind is None:
        kind = EdgeKind.ODOMETRY if odo is not None else EdgeKind.LOOP_CLOSURE
    return RelRotSystem(
        z, B, 0.5 * (R + R.T), dp.pose_id, dq.pose_id, kind, has_odometry=odo is not None
    )


def _weighted(R: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``R^+ X`` for a symmetric PSD covariance (pseudo-inverse if singular)."""
    w, V = np.linalg.eigh(R)
    if w[-1] <= 0:
        raise UnconstrainedRotationError("observation covariance is zero")
    keep = w > PINV_RTOL * w[-1]
    return V[:, keep] @ ((V[:, keep].T @ X) / w[keep, None])


def solve_relative_rotation(sys: RelRotSystem) -> RotationEdge:
    """Weighted linear least squares for ``c``, then projection to SO(2)."""
    RinvB = _weighted(sys.R, sys.B)
    N = sys.B.T @ RinvB
    if not np.all(np.isfinite(N)) or np.linalg.cond(N) > MAX_CONDITION:
        raise UnconstrainedRotationError(
            f"relative rotation {sys.from_pose}->{sys.to_pose} is ill-conditioned"
        )
    Sigma_c = np.linalg.inv(N)
    c_hat = Sigma_c @ (RinvB.T @ sys.z)
    try:
        proj = project_to_so2(RotParams2(c_hat, 0.5 * (Sigma_c + Sigma_c.T)))
    except DegenerateRotationError as exc:
        raise UnconstrainedRotationError(str(exc)) from exc
    ang = angle_from_params(proj)
    return RotationEdge(sys.from_pose, sys.to_pose, ang.theta, ang.var, sys.kind)


def shared_landmark_counts(visible: Sequence[Sequence[int]], n_landmarks: int):
    """Sparse pose-by-pose matrix of common landmark counts."""
    rows, cols = [], []
    for k, ids in enumerate(visible):
        rows.extend([k] * len(ids))
        cols.extend(ids)
    V = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(visible), max(n_landmarks, 1))
    )
    return (V @ V.T).tocsr()


def loop_closure_candidates(
    visible: Sequence[Sequence[int]],
    n_landmarks: int,
    min_gap: int = LOOP_MIN_GAP,
    max_edges: int = LOOP_MAX_EDGES,
):
    """Non-successive pose pairs ``(p, q)``, ``q - p >= min_gap``, sharing >=2 landmarks.

    Candidates for each ``p`` are grouped into runs of consecutive ``q``
    (one pass of the robot through the area); the best-connected ``q`` of
    each run competes for the ``max_edges`` slots of pose ``p``.
    """
    counts = shared_landmark_counts(visible, n_landmarks)
    out = []
    for p in range(counts.shape[0]):
        lo, hi = counts.indptr[p], counts.indptr[p + 1]
        qs = counts.indices[lo:hi]
        cs = counts.data[lo:hi]
        keep = (qs >= p + min_gap) & (cs >= 2)
        qs, cs = qs[keep], cs[keep]
        if len(qs) == 0:
            continue
        order = np.argsort(qs)
        qs, cs = qs[order], cs[order]
        breaks = np.flatnonzero(np.diff(qs) > 1) + 1
        best = []
        for run_q, run_c in zip(np.split(qs, breaks), np.split(cs, breaks)):
            k = int(np.argmax(run_c))
            best.append((int(run_c[k]), int(run_q[k])))
        best.sort(key=lambda t: (-t[0], t[1]))
        out.extend((p, q) for _, q in best[:max_edges])
    return out


def detect_rotation_edges(
    disp_sets: Sequence[LocalDisplacementSet],
    visible: Sequence[Sequence[int]],
    n_landmarks: int,
    min_gap: int = LOOP_MIN_GAP,
    max_edges: int = LOOP_MAX_EDGES,
):
    """Pose pairs that get a rotation edge, tagged with their kind."""
    n = len(disp_sets)
    pairs = [((k, k + 1), EdgeKind.ODOMETRY) for k in range(n - 1)]
    for p, q in loop_closure_candidates(visible, n_landmarks, min_gap, max_edges):
        if len(spanning_common_pairs(disp_sets[p], disp_sets[q])[0]):
            pairs.append(((p, q), EdgeKind.LOOP_CLOSURE))
    return pairs


def estimate_rotation_edges(
    disp_sets: Sequence[LocalDisplacementSet],
    visible: Sequence[Sequence[int]],
    odometry: Sequence[tuple],
    n_landmarks: int,
    min_gap: int = LOOP_MIN_GAP,
    max_edges: int = LOOP_MAX_EDGES,
):
    """Estimate every successive and loop-closure rotation edge.

    ``odometry[k]`` is ``(dtheta, variance)`` for the step ``k -> k+1``.
    Loop closures are linearized around headings chained from the
    successive estimates.
    """
    n = len(disp_sets)
    if len(odometry) != n - 1:
        raise InvalidInputError("need exactly one odometry heading per successive pose pair")
    edges = []
    chained = np.zeros(n)
    for k in range(n - 1):
        dth, _ = odometry[k]
        sys = build_relative_rotation_system(
            disp_sets[k], disp_sets[k + 1], dcm_from_angle(dth), odo=odometry[k]
        )
        e = solve_relative_rotation(sys)
        edges.append(e)
        chained[k + 1] = chained[k] + e.delta_theta

    for (p, q), kind in detect_rotation_edges(disp_sets, visible, n_landmarks, min_gap, max_edges):
        if kind is not EdgeKind.LOOP_CLOSURE:
            continue
        C_init = dcm_from_angle(wrap_angle(chained[q] - chained[p]))
        sys = build_relative_rotation_system(disp_sets[p], disp_sets[q], C_init, kind=kind)
        try:
            edges.append(solve_relative_rotation(sys))
        except UnconstrainedRotationError:
            continue
    return edges
