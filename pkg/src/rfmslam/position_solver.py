"""Linear estimation of robot and landmark positions given headings.

Every robot-to-landmark measurement is rotated into the world frame with the
estimated heading, ``R(theta_k) delta = l_j - p_k``. Those rows are stacked
with the headings themselves into ``gamma = A x + v`` and solved in a single
sparse weighted least-squares step. The information matrix of ``gamma`` is
written down in closed form so the (dense) covariance never has to be
inverted::

    Omega_gamma = [[ W,        -W M              ],
                   [ -M^T W,   Omega_theta + M^T W M ]]

with ``W = blkdiag(R_k R_delta R_k^T)^-1`` and ``M`` the derivative of the
rotated measurements with respect to the headings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError, RankDeficiencyError
from .geometry import rotate, wrap_angle
from .measurements import LocalFeaturePosition


@dataclass(frozen=True)
class OdometryTranslation:
    """Translation ``t`` from pose ``k`` to ``k + 1``, expressed in frame ``k``."""

    from_pose: int
    to_pose: int
    t: np.ndarray
    cov: np.ndarray


@dataclass
class GlobalLinearSystem:
    """Stacked system ``gamma = A x + v`` over ``x = [p, l, theta]``.

    Column layout of ``A``: ``2 * n_poses`` pose coordinates, then
    ``2 * n_landmarks`` landmark coordinates, then ``n_poses`` headings.
    Row layout: two rows per world-frame measurement (feature rows first,
    then optional odometry rows), then one row per non-anchor heading.
    """

    A: sp.csr_matrix
    gamma: np.ndarray
    Omega_gamma: sp.csr_matrix
    M: sp.csr_matrix
    n_poses: int
    n_landmarks: int
    anchor: int
    anchor_pose: np.ndarray
    wR: np.ndarray = field(repr=False)
    Omega_theta: sp.csc_matrix = field(repr=False, default=None)

    @property
    def n_measurements(self) -> int:
        return self.wR.shape[0]

    @property
    def n_unknowns(self) -> int:
        return 3 * self.n_poses + 2 * self.n_landmarks

    def pose_cols(self, k):
        """x, y columns of pose(s) ``k``, interleaved."""
        k = np.atleast_1d(k)
        return np.column_stack([2 * k, 2 * k + 1]).ravel()

    def landmark_cols(self, j):
        j = np.atleast_1d(j)
        off = 2 * self.n_poses
        return np.column_stack([off + 2 * j, off + 2 * j + 1]).ravel()

    def theta_col(self, k):
        return 2 * self.n_poses + 2 * self.n_landmarks + k

    def anchor_cols(self):
        a = self.anchor
        return np.array([2 * a, 2 * a + 1, self.theta_col(a)])

    def free_cols(self):
        mask = np.ones(self.n_unknowns, dtype=bool)
        mask[self.anchor_cols()] = False
        return np.flatnonzero(mask)


@dataclass
class SlamEstimate:
    p: np.ndarray
    l: np.ndarray
    theta: np.ndarray
    landmark_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 2)
        self.l = np.asarray(self.l, dtype=float).reshape(-1, 2)
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if self.landmark_ids is None:
            self.landmark_ids = np.arange(len(self.l))
        self.landmark_ids = np.asarray(self.landmark_ids, dtype=int)

    @property
    def poses(self) -> np.ndarray:
        return np.column_stack([self.p, self.theta]) if len(self.p) else np.zeros((0, 3))


def _check_connectivity(n_poses, n_landmarks, pose_of, other_of, anchor):
    n_nodes = n_poses + n_landmarks
    adj = sp.coo_matrix(
        (np.ones(len(pose_of)), (pose_of, other_of)), shape=(n_nodes, n_nodes)
    ).tocsr()
    _, labels = connected_components(adj, directed=False)
    bad = np.flatnonzero(labels != labels[anchor])
    if len(bad):
        poses = [int(k) for k in bad if k < n_poses]
        lms = [int(k - n_poses) for k in bad if k >= n_poses]
        parts = []
        if poses:
            parts.append(f"poses {poses[:20]}")
        if lms:
            parts.append(f"landmarks {lms[:20]}")
        raise RankDeficiencyError(
            "position system is rank deficient; unconstrained " + " and ".join(parts),
            poses,
            lms,
        )


def assemble_global_system(
    theta_hat: np.ndarray,
    Omega_theta: sp.spmatrix,
    local: Sequence[LocalFeaturePosition],
    n_landmarks: int,
    odometry: Optional[Sequence[OdometryTranslation]] = None,
    anchor: int = 0,
    anchor_pose=(0.0, 0.0, 0.0),
) -> GlobalLinearSystem:
    """Build ``A``, ``gamma`` and the closed-form ``Omega_gamma``.

    ``Omega_theta`` is the heading information over the non-anchor poses
    (in increasing pose order), as returned by ``orientation_information``.
    Landmark ids must be dense in ``range(n_landmarks)``.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = len(theta_hat)
    if not 0 <= anchor < n:
        raise InvalidInputError("anchor outside pose range")
    Omega_theta = sp.csr_matrix(Omega_theta)
    if Omega_theta.shape != (n - 1, n - 1):
        raise InvalidInputError(f"Omega_theta must be {(n - 1, n - 1)}, got {Omega_theta.shape}")
    odometry = list(odometry or [])

    k_src = np.array([z.pose_id for z in local] + [o.from_pose for o in odometry], dtype=int)
    tgt_lm = np.array([z.landmark_id for z in local], dtype=int)
    tgt_pose = np.array([o.to_pose for o in odometry], dtype=int)
    if len(tgt_lm) and (tgt_lm.min() < 0 or tgt_lm.max() >= n_landmarks):
        raise InvalidInputError("landmark id outside range(n_landmarks)")
    if len(k_src) and (k_src.min() < 0 or k_src.max() >= n or (len(tgt_pose) and tgt_pose.max() >= n)):
        raise InvalidInputError("pose id outside range of headings")
    _check_connectivity(
        n, n_landmarks, k_src, np.concatenate([n + tgt_lm, tgt_pose]).astype(int), anchor
    )

    vec = np.array([z.delta for z in local] + [o.t for o in odometry], dtype=float).reshape(-1, 2)
    cov = np.array([z.cov for z in local] + [o.cov for o in odometry], dtype=float).reshape(-1, 2, 2)
    m = len(vec)

    th = theta_hat[k_src]
    world = rotate(th, vec)
    c, s = np.cos(th), np.sin(th)
    Rk = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    wR = Rk @ cov @ np.swapaxes(Rk, 1, 2)
    wR = 0.5 * (wR + np.swapaxes(wR, 1, 2))
    dworld = rotate(th + np.pi / 2, vec)  # d/dtheta of R(theta) v

    # A: measurement rows then heading rows
    n_cols = 3 * n + 2 * n_landmarks
    rows = np.arange(2 * m)
    tgt_cols_base = np.concatenate([2 * n + 2 * tgt_lm, 2 * tgt_pose]).astype(int)
    r_idx = np.concatenate([rows, rows])
    c_idx = np.concatenate(
        [np.repeat(2 * k_src, 2) + np.tile([0, 1], m), np.repeat(tgt_cols_base, 2) + np.tile([0, 1], m)]
    )
    v_idx = np.concatenate([-np.ones(2 * m), np.ones(2 * m)])
    free = np.array([k for k in range(n) if k != anchor], dtype=int)
    theta_rows = 2 * m + np.arange(n - 1)
    theta_cols = 2 * n + 2 * n_landmarks + free
    A = sp.csr_matrix(
        (
            np.concatenate([v_idx, np.ones(n - 1)]),
            (np.concatenate([r_idx, theta_rows]), np.concatenate([c_idx, theta_cols])),
        ),
        shape=(2 * m + n - 1, n_cols),
    )
    gamma = np.concatenate([world.ravel(), theta_hat[free]])

    # M: 2m x (n-1) over non-anchor headings
    free_pos = np.full(n, -1)
    free_pos[free] = np.arange(n - 1)
    fcol = free_pos[k_src]
    has = fcol >= 0
    M = sp.csr_matrix(
        (dworld[has].ravel(), (np.flatnonzero(np.repeat(has, 2)), np.repeat(fcol[has], 2))),
        shape=(2 * m, n - 1),
    )

    W_blocks = np.linalg.inv(wR)
    W_blocks = 0.5 * (W_blocks + np.swapaxes(W_blocks, 1, 2))
    W = sp.block_diag(list(W_blocks), format="csr") if m else sp.csr_matrix((0, 0))
    WM = W @ M
    Omega_gamma = sp.bmat(
        [[W, -WM], [-WM.T, Omega_theta + M.T @ WM]], format="csr"
    )
    return GlobalLinearSystem(
        A, gamma, Omega_gamma, M, n, n_landmarks, anchor,
        np.asarray(anchor_pose, dtype=float), wR, Omega_theta.tocsc(),
    )


def _normal_equations(sys: GlobalLinearSystem):
    free = sys.free_cols()
    x_anchor = np.zeros(sys.n_unknowns)
    x_anchor[sys.anchor_cols()] = sys.anchor_pose
    AtO = (sys.A.T @ sys.Omega_gamma).tocsr()
    N = (AtO @ sys.A).tocsc()
    rhs = AtO @ (sys.gamma - sys.A @ x_anchor)
    return N[free][:, free].tocsc(), rhs[free], free, x_anchor


def solve_positions(sys: GlobalLinearSystem) -> SlamEstimate:
    """Solve ``(A^T Omega A) x = A^T Omega gamma`` with the anchor eliminated."""
    N, rhs, free, x = _normal_equations(sys)
    try:
        lu = spla.splu(N, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise RankDeficiencyError(f"normal matrix factorization failed: {exc}") from exc
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise RankDeficiencyError("normal matrix is singular to working precision")
    x[free] = sol
    n, L = sys.n_poses, sys.n_landmarks
    p = x[: 2 * n].reshape(n, 2)
    l = x[2 * n : 2 * n + 2 * L].reshape(L, 2)
    theta = wrap_angle(x[2 * n + 2 * L :])
    return SlamEstimate(p, l, theta)


def solution_covariance(sys: GlobalLinearSystem, cols: Optional[Sequence[int]] = None) -> np.ndarray:
    """Covariance ``(A^T Omega A)^-1`` restricted to ``cols`` (full-space indices).

    Anchor columns have zero variance. Intended for small problems and
    consistency checks; the cost is one solve per requested column.
    """
    N, _, free, _ = _normal_equations(sys)
    if cols is None:
        cols = np.arange(sys.n_unknowns)
    cols = np.asarray(cols, dtype=int)
    pos = np.full(sys.n_unknowns, -1)
    pos[free] = np.arange(len(free))
    lu = spla.splu(N, permc_spec="MMD_AT_PLUS_A")
    out = np.zeros((len(cols), len(cols)))
    sel = pos[cols]
    ok = sel >= 0
    if ok.any():
        E = np.zeros((len(free), int(ok.sum())))
        E[sel[ok], np.arange(int(ok.sum()))] = 1.0
        X = lu.solve(E)
        out[np.ix_(ok, ok)] = X[sel[ok]]
    return out
