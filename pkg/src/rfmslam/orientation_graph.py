"""Global heading estimation from relative rotation edges.

The cost is the weighted DCM-trace objective

    J(theta) = -sum_e kappa_e * tr(C_p^T Chat_e C_q),   kappa_e = 1 / sigma_e

with ``C_k = dcm_from_angle(theta_k).T`` the world-to-body DCM of pose k and
``Chat_e = dcm_from_angle(dtheta_e)``. Each term equals
``-2 kappa cos(dtheta_e - (theta_q - theta_p))``, so the objective is
periodic in every heading and wrap-around needs no special handling.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedGraphError, InvalidInputError, RankDeficiencyError
from .geometry import wrap_angle
from .rotation_constraints import RotationEdge

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MAX_ITERATIONS = 100
STALL_STEPS = 10


@dataclass(frozen=True)
class OrientationGraph:
    n_nodes: int
    edges: tuple
    H: sp.csr_matrix = field(repr=False)
    R_theta: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Sequence[RotationEdge]) -> "OrientationGraph":
        edges = tuple(edges)
        m = len(edges)
        src = np.array([e.from_pose for e in edges], dtype=int)
        dst = np.array([e.to_pose for e in edges], dtype=int)
        if m and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n_nodes):
            raise InvalidInputError("edge endpoint outside node range")
        rows = np.repeat(np.arange(m), 2)
        cols = np.column_stack([src, dst]).ravel()
        vals = np.tile([-1.0, 1.0], m)
        H = sp.csr_matrix((vals, (rows, cols)), shape=(m, n_nodes))
        R = np.array([e.var for e in edges], dtype=float)
        graph = cls(n_nodes, edges, H, R)
        unreachable = graph.unreachable_nodes()
        if unreachable:
            raise DisconnectedGraphError(
                f"orientation graph is disconnected; unreachable from node 0: {unreachable[:20]}",
                unreachable,
            )
        return graph

    @property
    def src(self) -> np.ndarray:
        return np.array([e.from_pose for e in self.edges], dtype=int)

    @property
    def dst(self) -> np.ndarray:
        return np.array([e.to_pose for e in self.edges], dtype=int)

    @property
    def delta(self) -> np.ndarray:
        return np.array([e.delta_theta for e in self.edges], dtype=float)

    @property
    def kappa(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.R_theta)

    def unreachable_nodes(self) -> list:
        if self.n_nodes == 0:
            return []
        adj = abs(self.H.T) @ abs(self.H)
        _, labels = connected_components(adj, directed=False)
        return [int(k) for k in np.flatnonzero(labels != labels[0])]


@dataclass
class HeadingEstimate:
    theta: np.ndarray
    Omega_theta: sp.csc_matrix
    Sigma_theta: Optional[np.ndarray]
    anchor: int = 0


@dataclass
class OptimizationResult:
    theta: np.ndarray
    cost: float
    grad_norm: float
    iterations: int
    converged: bool
    stalled: bool = False
    history: list = field(default_factory=list, repr=False)


def _dcm_t(theta):
    """World-to-body DCMs ``C(theta) = R(theta)^T`` stacked on axis 0."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)


def _dcm_t_derivative(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([-s, c], -1), np.stack([-c, -s], -1)], -2)


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def cost_and_gradient(graph: OrientationGraph, theta: np.ndarray):
    """Objective value and its derivative with respect to every heading.

    The derivative is assembled from the Euclidean matrix gradients
    ``dJ/dC_p = -sum kappa Chat C_q`` and ``dJ/dC_q = -sum kappa Chat^T C_p``,
    pulled back through ``dC/dtheta``.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("headings must be finite")
    src, dst, kappa = graph.src, graph.dst, graph.kappa
    C = _dcm_t(theta)
    Chat = _rot(graph.delta)
    Cp, Cq = C[src], C[dst]
    J = -float(np.sum(kappa * np.einsum("eji,ejk,eki->e", Cp, Chat, Cq)))

    G = np.zeros((graph.n_nodes, 2, 2))
    np.add.at(G, src, -kappa[:, None, None] * (Chat @ Cq))
    np.add.at(G, dst, -kappa[:, None, None] * (np.swapaxes(Chat, 1, 2) @ Cp))
    grad = np.einsum("nij,nij->n", G, _dcm_t_derivative(theta))
    return J, grad


def cost_hessian(graph: OrientationGraph, theta: np.ndarray) -> sp.csr_matrix:
    """Hessian of the objective in the heading parameterization (sparse)."""
    r = graph.delta - (theta[graph.dst] - theta[graph.src])
    w = 2.0 * graph.kappa * np.cos(r)
    return (graph.H.T @ sp.diags(w) @ graph.H).tocsr()


def _truncated_cg(hess, grad, radius, max_inner):
    """Steihaug-Toint CG for ``min g.s + s.H.s/2`` subject to ``|s| <= radius``."""
    s = np.zeros_like(grad)
    r = grad.copy()
    d = -r
    rr = r @ r
    tol = math.sqrt(rr) * min(0.1, math.sqrt(math.sqrt(rr)))
    for _ in range(max_inner):
        Hd = hess @ d
        dHd = d @ Hd
        if dHd <= 0:
            return s + _to_boundary(s, d, radius) * d, True
        alpha = rr / dHd
        s_next = s + alpha * d
        if np.linalg.norm(s_next) >= radius:
            return s + _to_boundary(s, d, radius) * d, True
        s = s_next
        r = r + alpha * Hd
        rr_next = r @ r
        if math.sqrt(rr_next) <= tol:
            break
        d = -r + (rr_next / rr) * d
        rr = rr_next
    return s, False


def _to_boundary(s, d, radius):
    a, b, c = d @ d, 2 * (s @ d), s @ s - radius * radius
    return (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)


def optimize_orientations(
    graph: OrientationGraph,
    theta0: np.ndarray,
    anchor: int = 0,
    anchor_theta: float = 0.0,
    grad_tol: float = GRAD_TOL,
    max_iterations: int = MAX_ITERATIONS,
) -> OptimizationResult:
    """Minimize the DCM-trace cost with a trust-region Newton method.

    Headings are updated additively (the exponential map of SO(2)) and the
    returned solution is gauge-fixed so ``theta[anchor] == anchor_theta``.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    n = graph.n_nodes
    if theta.shape != (n,):
        raise InvalidInputError(f"initial guess must have shape ({n},)")
    J, g = cost_and_gradient(graph, theta)
    radius_max = math.pi * math.sqrt(max(n, 1))
    radius = radius_max / 8
    history = [J]
    stall = 0
    stalled = False
    it = 0
    while it < max_iterations and np.linalg.norm(g) >= grad_tol:
        it += 1
        Hs = cost_hessian(graph, theta)
        step, hit_boundary = _truncated_cg(Hs, g, radius, max_inner=max(2 * n, 10))
        model_decrease = -(g @ step + 0.5 * step @ (Hs @ step))
        theta_new = theta + step
        J_new, g_new = cost_and_gradient(graph, theta_new)
        reg = 1e3 * np.finfo(float).eps * max(1.0, abs(J))
        rho = (J - J_new + reg) / (model_decrease + reg)
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75 and hit_boundary:
            radius = min(2 * radius, radius_max)
        if rho > 0.1 and model_decrease >= 0:
            stall = stall + 1 if J_new >= J else 0
            theta, J, g = theta_new, J_new, g_new
            history.append(J)
            if stall >= STALL_STEPS:
                stalled = True
                log.warning("orientation cost did not decrease over %d accepted steps", STALL_STEPS)
                break
        if radius < 1e-14:
            break
    converged = bool(np.linalg.norm(g) < grad_tol)
    theta = wrap_angle(theta - (theta[anchor] - anchor_theta))
    return OptimizationResult(
        np.atleast_1d(theta), J, float(np.linalg.norm(g)), it, converged, stalled, history
    )


def chain_initial_guess(graph: OrientationGraph, anchor_theta: float = 0.0) -> np.ndarray:
    """Headings from a breadth-first spanning tree rooted at node 0."""
    n = graph.n_nodes
    theta = np.full(n, np.nan)
    if n == 0:
        return theta
    adj = [[] for _ in range(n)]
    for e in graph.edges:
        adj[e.from_pose].append((e.to_pose, e.delta_theta))
        adj[e.to_pose].append((e.from_pose, -e.delta_theta))
    theta[0] = anchor_theta
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v, d in adj[u]:
            if np.isnan(theta[v]):
                theta[v] = wrap_angle(theta[u] + d)
                queue.append(v)
    missing = np.flatnonzero(np.isnan(theta))
    if len(missing):
        raise DisconnectedGraphError(
            f"nodes unreachable from node 0: {missing[:20].tolist()}", missing.tolist()
        )
    return wrap_angle(theta) if n > 1 else np.array([wrap_angle(theta[0])])


def orientation_information(
    graph: OrientationGraph, anchor: int = 0, with_covariance: bool = True
):
    """Heading information ``H^T R^-1 H`` with the anchor column removed.

    Returns ``(Omega, Sigma)``: ``Omega`` is sparse over the non-anchor nodes
    in increasing order; ``Sigma`` is the full ``n x n`` covariance with a
    zero anchor row and column (``None`` when not requested).
    """
    n = graph.n_nodes
    free = np.array([k for k in range(n) if k != anchor], dtype=int)
    Hf = graph.H[:, free]
    Omega = (Hf.T @ sp.diags(1.0 / graph.R_theta) @ Hf).tocsc()
    if n == 1:
        return Omega, (np.zeros((1, 1)) if with_covariance else None)
    if np.any(np.asarray(abs(Omega).sum(axis=0)).ravel() == 0):
        raise RankDeficiencyError("heading information is singular (node without edges)")
    Sigma = None
    if with_covariance:
        try:
            lu = spla.splu(Omega)
            Sig_free = lu.solve(np.eye(n - 1))
        except RuntimeError as exc:
            raise RankDeficiencyError(f"heading information is singular: {exc}") from exc
        if not np.all(np.isfinite(Sig_free)):
            raise RankDeficiencyError("heading information is singular")
        Sigma = np.zeros((n, n))
        Sigma[np.ix_(free, free)] = 0.5 * (Sig_free + Sig_free.T)
    return Omega, Sigma


def estimate_headings(
    graph: OrientationGraph, anchor_theta: float = 0.0, with_covariance: bool = True
):
    """Chain, optimize and attach the information matrix in one call."""
    theta0 = chain_initial_guess(graph, anchor_theta)
    res = optimize_orientations(graph, theta0, anchor=0, anchor_theta=anchor_theta)
    Omega, Sigma = orientation_information(graph, 0, with_covariance)
    return HeadingEstimate(res.theta, Omega, Sigma, 0), res
