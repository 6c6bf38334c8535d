"""Full feature-SLAM nonlinear least squares (odometry + range-bearing), LM-damped.

This is the conventional joint solver the separated method is compared
against. It is initialized from dead reckoning, which is exactly what makes
it prone to converging to a poor local minimum at high odometry noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dataset import Dataset
from .geometry import wrap_angle
from .position_solver import SlamEstimate
from .simulator import baseline_odometry_trajectory

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MAX_ITERATIONS = 100
REL_COST_TOL = 1e-12
LAMBDA_INIT = 1e-4
LAMBDA_MAX = 1e10


@dataclass
class GaussNewtonResult:
    estimate: SlamEstimate
    converged: bool
    iterations: int
    cost: float
    reason: str


class _Problem:
    def __init__(self, ds: Dataset, landmark_ids):
        self.n = ds.n_poses
        self.lm_ids = np.asarray(landmark_ids, dtype=int)
        remap = np.full(ds.n_landmarks, -1)
        remap[self.lm_ids] = np.arange(len(self.lm_ids))
        self.L = len(self.lm_ids)
        odo = ds.odometry
        self.o_from = np.array([o.from_id for o in odo], dtype=int)
        self.o_to = np.array([o.to_id for o in odo], dtype=int)
        self.o_z = np.array([[o.dx, o.dy, o.dtheta] for o in odo]).reshape(-1, 3)
        self.o_w = 1.0 / np.sqrt(np.array([[o.var_x, o.var_y, o.var_t] for o in odo]).reshape(-1, 3))
        zs = ds.observations
        self.r_pose = np.array([z.pose_id for z in zs], dtype=int)
        self.r_lm = remap[np.array([z.landmark_id for z in zs], dtype=int)]
        self.r_z = np.array([[z.range, z.bearing] for z in zs]).reshape(-1, 2)
        self.r_w = 1.0 / np.sqrt(np.array([[z.sigma_r2, z.sigma_b2] for z in zs]).reshape(-1, 2))
        self.n_vars = 3 * self.n + 2 * self.L

    def unpack(self, x):
        return x[: 3 * self.n].reshape(self.n, 3), x[3 * self.n :].reshape(self.L, 2)

    def residuals(self, x, with_jacobian=True):
        """Whitened residuals and (optionally) their sparse Jacobian."""
        P, Lm = self.unpack(x)
        a, b = P[self.o_from], P[self.o_to]
        c, s = np.cos(a[:, 2]), np.sin(a[:, 2])
        dx, dy = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
        h_o = np.column_stack([c * dx + s * dy, -s * dx + c * dy, b[:, 2] - a[:, 2]])
        e_o = h_o - self.o_z
        e_o[:, 2] = wrap_angle(e_o[:, 2])
        e_o *= self.o_w

        p = P[self.r_pose]
        l = Lm[self.r_lm]
        rx, ry = l[:, 0] - p[:, 0], l[:, 1] - p[:, 1]
        q = rx**2 + ry**2
        rng = np.sqrt(q)
        h_r = np.column_stack([rng, np.arctan2(ry, rx) - p[:, 2]])
        e_r = h_r - self.r_z
        e_r[:, 1] = wrap_angle(e_r[:, 1])
        e_r *= self.r_w
        res = np.concatenate([e_o.ravel(), e_r.ravel()])
        if not with_jacobian:
            return res, None

        rows, cols, vals = [], [], []

        def put(r, cidx, v):
            rows.append(r)
            cols.append(cidx)
            vals.append(v)

        m_o = len(self.o_from)
        ro = 3 * np.arange(m_o)
        ia, ib = 3 * self.o_from, 3 * self.o_to
        w = self.o_w
        # d h_o / d a
        put(ro, ia, -c * w[:, 0]); put(ro, ia + 1, -s * w[:, 0])
        put(ro, ia + 2, (-s * dx + c * dy) * w[:, 0])
        put(ro + 1, ia, s * w[:, 1]); put(ro + 1, ia + 1, -c * w[:, 1])
        put(ro + 1, ia + 2, (-c * dx - s * dy) * w[:, 1])
        put(ro + 2, ia + 2, -w[:, 2])
        # d h_o / d b
        put(ro, ib, c * w[:, 0]); put(ro, ib + 1, s * w[:, 0])
        put(ro + 1, ib, -s * w[:, 1]); put(ro + 1, ib + 1, c * w[:, 1])
        put(ro + 2, ib + 2, w[:, 2])

        rr = 3 * m_o + 2 * np.arange(len(self.r_pose))
        ip = 3 * self.r_pose
        il = 3 * self.n + 2 * self.r_lm
        w = self.r_w
        put(rr, ip, -rx / rng * w[:, 0]); put(rr, ip + 1, -ry / rng * w[:, 0])
        put(rr, il, rx / rng * w[:, 0]); put(rr, il + 1, ry / rng * w[:, 0])
        put(rr + 1, ip, ry / q * w[:, 1]); put(rr + 1, ip + 1, -rx / q * w[:, 1])
        put(rr + 1, ip + 2, -w[:, 1])
        put(rr + 1, il, -ry / q * w[:, 1]); put(rr + 1, il + 1, rx / q * w[:, 1])
        J = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(res), self.n_vars),
        )
        return res, J


def _initial_landmarks(ds: Dataset, poses: np.ndarray, landmark_ids) -> np.ndarray:
    first = {}
    for z in ds.observations:
        first.setdefault(z.landmark_id, z)
    out = np.zeros((len(landmark_ids), 2))
    for k, j in enumerate(landmark_ids):
        z = first[int(j)]
        x, y, th = poses[z.pose_id]
        out[k] = (x + z.range * np.cos(th + z.bearing), y + z.range * np.sin(th + z.bearing))
    return out


def gauss_newton_baseline(
    dataset: Dataset,
    init_poses=None,
    max_iterations: int = MAX_ITERATIONS,
    grad_tol: float = GRAD_TOL,
) -> GaussNewtonResult:
    """Levenberg-Marquardt over all poses and landmarks, pose 0 held fixed.

    ``init_poses`` defaults to the dead-reckoned trajectory from the origin.
    Landmarks start at their first observation seen from the initial poses.
    Convergence means the gradient norm fell below ``grad_tol`` or the cost
    stopped changing to working precision; repeated step rejection, a
    singular system or the iteration cap count as no convergence.
    """
    landmark_ids = np.unique([z.landmark_id for z in dataset.observations]).astype(int)
    prob = _Problem(dataset, landmark_ids)
    if init_poses is None:
        init_poses = baseline_odometry_trajectory(dataset)
    init_poses = np.asarray(init_poses, dtype=float)
    x = np.concatenate(
        [init_poses.ravel(), _initial_landmarks(dataset, init_poses, landmark_ids).ravel()]
    )
    free = np.arange(3, prob.n_vars)
    lam = LAMBDA_INIT
    res, J = prob.residuals(x)
    cost = 0.5 * res @ res
    converged, reason, it = False, "max-iterations", 0
    while it < max_iterations:
        Jf = J[:, free]
        g = Jf.T @ res
        if np.linalg.norm(g) < grad_tol:
            converged, reason = True, "gradient"
            break
        H = (Jf.T @ Jf).tocsc()
        diag = H.diagonal()
        it += 1
        accepted = False
        while lam <= LAMBDA_MAX:
            A = H + sp.diags(lam * np.maximum(diag, 1e-12))
            try:
                step = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(-g)
            except RuntimeError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_new = x.copy()
                x_new[free] += step
                res_new, _ = prob.residuals(x_new, with_jacobian=False)
                cost_new = 0.5 * res_new @ res_new
                if cost_new < cost:
                    accepted = True
                    break
            lam *= 10.0
        if not accepted:
            reason = "step-rejection" if lam > LAMBDA_MAX else "singular"
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        x = x_new
        cost = cost_new
        lam = max(lam / 10.0, 1e-12)
        res, J = prob.residuals(x)
        if rel < REL_COST_TOL:
            converged, reason = True, "cost-stationary"
            break
    else:
        g = J[:, free].T @ res
        if np.linalg.norm(g) < grad_tol:
            converged, reason = True, "gradient"

    P, Lm = prob.unpack(x)
    P = P.copy()
    P[:, 2] = wrap_angle(P[:, 2])
    est = SlamEstimate(P[:, :2], Lm, P[:, 2], landmark_ids)
    if not converged:
        log.info("Gauss-Newton baseline did not converge (%s after %d iterations)", reason, it)
    return GaussNewtonResult(est, converged, it, float(cost), reason)
