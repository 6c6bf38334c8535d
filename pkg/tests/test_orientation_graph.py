import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfmslam.errors import DisconnectedGraphError, InvalidInputError
from rfmslam.geometry import wrap_angle
from rfmslam.orientation_graph import (
    OrientationGraph,
    chain_initial_guess,
    cost_and_gradient,
    cost_hessian,
    estimate_headings,
    optimize_orientations,
    orientation_information,
)
from rfmslam.rotation_constraints import EdgeKind, RotationEdge


def edge(p, q, d, var=0.01, kind=EdgeKind.ODOMETRY):
    return RotationEdge(p, q, d, var, kind)


def graph_from_truth(theta, pairs, var=0.01, noise=None):
    noise = np.zeros(len(pairs)) if noise is None else noise
    edges = [edge(p, q, wrap_angle(theta[q] - theta[p] + e), var) for (p, q), e in zip(pairs, noise)]
    return OrientationGraph.from_edges(len(theta), edges)


def test_chain_example():
    g = OrientationGraph.from_edges(3, [edge(0, 1, math.pi / 2), edge(1, 2, math.pi / 2)])
    np.testing.assert_allclose(np.abs(chain_initial_guess(g)), [0, math.pi / 2, math.pi], atol=1e-15)


def test_chain_single_node():
    g = OrientationGraph.from_edges(1, [])
    np.testing.assert_allclose(chain_initial_guess(g, 0.3), [0.3], atol=1e-15)
    res = optimize_orientations(g, np.array([0.3]), anchor_theta=0.3)
    assert res.converged and res.theta[0] == pytest.approx(0.3)


def test_chain_wraps():
    g = OrientationGraph.from_edges(3, [edge(0, 1, math.pi), edge(1, 2, math.pi)])
    th = chain_initial_guess(g)
    assert abs(th[1]) == pytest.approx(math.pi)
    assert th[2] == pytest.approx(0.0, abs=1e-12)


def test_cost_at_truth_and_zero_gradient(rng):
    theta = rng.uniform(-math.pi, math.pi, 8)
    pairs = [(k, k + 1) for k in range(7)] + [(0, 5), (2, 7)]
    g = graph_from_truth(theta, pairs, var=0.04)
    J, grad = cost_and_gradient(g, theta)
    assert J == pytest.approx(-2 * np.sum(g.kappa))
    assert np.abs(grad).max() < 1e-10


@given(st.integers(0, 2**16))
def test_gradient_and_hessian_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi, 6)
    pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3), (1, 5)]
    g = graph_from_truth(rng.uniform(-3, 3, 6), pairs, var=rng.uniform(0.001, 0.1))
    _, grad = cost_and_gradient(g, theta)
    H = cost_hessian(g, theta).toarray()
    h = 1e-6
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        Jp, gp = cost_and_gradient(g, theta + e)
        Jm, gm = cost_and_gradient(g, theta - e)
        assert grad[k] == pytest.approx((Jp - Jm) / (2 * h), rel=1e-5, abs=1e-5)
        np.testing.assert_allclose(H[:, k], (gp - gm) / (2 * h), rtol=1e-5, atol=1e-5)


def test_consistent_cycle_recovered_exactly():
    theta = np.array([0.0, 0.7, -2.0])
    g = graph_from_truth(theta, [(0, 1), (1, 2), (2, 0)])
    res = optimize_orientations(g, chain_initial_guess(g))
    assert res.converged
    np.testing.assert_allclose(wrap_angle(res.theta - theta), 0, atol=1e-10)


def test_inconsistent_cycle_matches_grid_search():
    theta = np.array([0.0, 0.7, -2.0])
    g = graph_from_truth(theta, [(0, 1), (1, 2), (2, 0)], noise=np.array([0.2, -0.1, 0.15]))
    g = OrientationGraph.from_edges(3, [
        RotationEdge(e.from_pose, e.to_pose, e.delta_theta, v) for e, v in zip(g.edges, (0.01, 0.02, 0.04))
    ])
    res = optimize_orientations(g, chain_initial_guess(g))
    step = 1e-3
    a, b = np.meshgrid(np.arange(-0.4, 0.4, step), np.arange(-0.4, 0.4, step), indexing="ij")
    th = np.stack([np.zeros_like(a), 0.7 + a, -2.0 + b], -1)
    # brute-force evaluation of the cosine form of the objective
    J = np.zeros_like(a)
    for e, k in zip(g.edges, g.kappa):
        J -= 2 * k * np.cos(e.delta_theta - (th[..., e.to_pose] - th[..., e.from_pose]))
    i = np.unravel_index(np.argmin(J), J.shape)
    best, arg = J[i], (a[i], b[i])
    assert wrap_angle(res.theta[1] - 0.7 - arg[0]) == pytest.approx(0, abs=step)
    assert wrap_angle(res.theta[2] + 2.0 - arg[1]) == pytest.approx(0, abs=step)
    assert res.cost <= best + 1e-12


def test_perturbed_start_reaches_same_optimum(rng):
    theta = rng.uniform(-math.pi, math.pi, 12)
    pairs = [(k, k + 1) for k in range(11)] + [(0, 11), (3, 9)]
    g = graph_from_truth(theta, pairs, noise=rng.normal(0, 0.05, len(pairs)))
    ref = optimize_orientations(g, chain_initial_guess(g))
    start = chain_initial_guess(g) + rng.normal(0, 0.3, 12)
    other = optimize_orientations(g, start)
    assert ref.converged and other.converged
    np.testing.assert_allclose(wrap_angle(other.theta - ref.theta), 0, atol=1e-7)


def test_cost_is_monotone_over_accepted_steps(rng):
    theta = rng.uniform(-math.pi, math.pi, 30)
    pairs = [(k, k + 1) for k in range(29)] + [(0, 29), (5, 20), (10, 25)]
    g = graph_from_truth(theta, pairs, noise=rng.normal(0, 0.1, len(pairs)))
    res = optimize_orientations(g, chain_initial_guess(g) + rng.normal(0, 0.5, 30))
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))


@given(st.floats(-math.pi, math.pi), st.integers(0, 2**16))
def test_gauge_invariance(shift, seed):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi, 7)
    pairs = [(k, k + 1) for k in range(6)] + [(0, 6)]
    g = graph_from_truth(theta, pairs, noise=rng.normal(0, 0.05, len(pairs)))
    a = optimize_orientations(g, chain_initial_guess(g))
    b = optimize_orientations(g, chain_initial_guess(g, shift), anchor_theta=shift)
    np.testing.assert_allclose(wrap_angle(b.theta - a.theta - shift), 0, atol=1e-7)
    Ja, _ = cost_and_gradient(g, a.theta)
    Jb, _ = cost_and_gradient(g, b.theta)
    assert Ja == pytest.approx(Jb, rel=1e-12)


def test_information_examples():
    g = OrientationGraph.from_edges(3, [edge(0, 1, 0.0, 1.0), edge(1, 2, 0.0, 1.0)])
    Omega, Sigma = orientation_information(g)
    np.testing.assert_allclose(Omega.toarray(), [[2, -1], [-1, 1]])
    np.testing.assert_allclose(Sigma, [[0, 0, 0], [0, 1, 1], [0, 1, 2]])
    g2 = OrientationGraph.from_edges(2, [edge(0, 1, 0.0, 0.25)])
    Omega2, _ = orientation_information(g2)
    np.testing.assert_allclose(Omega2.toarray(), [[1 / 0.25]])


def test_information_times_covariance_is_identity(rng):
    n = 20
    pairs = [(k, k + 1) for k in range(n - 1)] + [(0, 10), (4, 17), (2, 19)]
    g = graph_from_truth(rng.uniform(-3, 3, n), pairs, var=rng.uniform(0.001, 0.1))
    g = OrientationGraph.from_edges(n, [
        RotationEdge(e.from_pose, e.to_pose, e.delta_theta, v) for e, v in zip(g.edges, rng.uniform(1e-3, 0.1, len(pairs)))
    ])
    Omega, Sigma = orientation_information(g)
    np.testing.assert_allclose(Omega.toarray() @ Sigma[1:, 1:], np.eye(n - 1), atol=1e-9)


def test_disconnected_graph_rejected():
    with pytest.raises(DisconnectedGraphError) as exc:
        OrientationGraph.from_edges(4, [edge(0, 1, 0.1), edge(2, 3, 0.1)])
    assert exc.value.unreachable == (2, 3)
    with pytest.raises(InvalidInputError):
        OrientationGraph.from_edges(2, [edge(0, 5, 0.1)])


def test_covariance_matches_monte_carlo():
    """Independent edge noise: empirical heading scatter matches Sigma."""
    rng = np.random.default_rng(7)
    n = 10
    theta = rng.uniform(-math.pi, math.pi, n)
    theta[0] = 0.0
    pairs = [(k, k + 1) for k in range(n - 1)] + [(0, 9), (2, 6), (3, 8)]
    var = rng.uniform(0.002, 0.02, len(pairs))
    errs = []
    Sigma = None
    for _ in range(2000):
        noise = rng.normal(0, np.sqrt(var))
        edges = [RotationEdge(p, q, wrap_angle(theta[q] - theta[p] + e), v) for (p, q), e, v in zip(pairs, noise, var)]
        h, res = estimate_headings(OrientationGraph.from_edges(n, edges), with_covariance=Sigma is None)
        Sigma = h.Sigma_theta if Sigma is None else Sigma
        errs.append(wrap_angle(h.theta - theta))
    emp = np.cov(np.array(errs).T)
    assert np.trace(emp) / np.trace(Sigma) == pytest.approx(1.0, abs=0.08)
    assert np.linalg.norm(emp - Sigma) / np.linalg.norm(Sigma) < 0.1
