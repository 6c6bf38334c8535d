"""SO(2) helpers: rotation matrices, [cos, sin] parameter vectors and angles.

Conventions used throughout the package:

* ``dcm_from_angle(theta)`` is the active rotation ``[[c, -s], [s, c]]``.
  For a robot with heading ``theta`` it maps robot-frame vectors into the
  world frame.
* A relative rotation between poses ``p`` and ``q`` is parameterized by
  ``c = [cos(dtheta), sin(dtheta)]`` with ``dtheta = theta_q - theta_p``, so
  that vectors seen from ``q`` map into the frame of ``p`` through
  ``dcm_from_angle(dtheta)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DegenerateRotationError, InvalidInputError

EPS_NORM = 1e-9
UNIT_TOL = 1e-6


class RotParams2(NamedTuple):
    """Rotation parameter vector ``c = [c1, c2]`` with its 2x2 covariance."""

    c: np.ndarray
    sigma: np.ndarray


class Angle(NamedTuple):
    theta: float
    var: float = 0.0


def dcm_from_angle(theta: float) -> np.ndarray:
    if not math.isfinite(theta):
        raise InvalidInputError(f"angle must be finite, got {theta!r}")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def dcm_derivative(theta: float) -> np.ndarray:
    """d/dtheta of ``dcm_from_angle(theta)``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, -c], [c, -s]])


def wrap_angle(theta):
    """Wrap to ``(-pi, pi]``. Accepts scalars or arrays."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def normalization_jacobian(c: np.ndarray) -> np.ndarray:
    """Jacobian of ``c / ||c||`` with respect to ``c``."""
    c1, c2 = float(c[0]), float(c[1])
    n = math.hypot(c1, c2)
    return np.array([[c2 * c2, -c1 * c2], [-c1 * c2, c1 * c1]]) / n**3


def project_to_so2(params: RotParams2) -> RotParams2:
    """Normalize ``c`` onto the unit circle and propagate its covariance."""
    c = np.asarray(params.c, dtype=float)
    n = math.hypot(c[0], c[1])
    if not n > EPS_NORM:
        raise DegenerateRotationError(f"rotation parameters too small to normalize (|c|={n:.3g})")
    J = normalization_jacobian(c)
    sigma = J @ np.asarray(params.sigma, dtype=float) @ J.T
    return RotParams2(c / n, 0.5 * (sigma + sigma.T))


def angle_from_params(params: RotParams2) -> Angle:
    c = np.asarray(params.c, dtype=float)
    n = math.hypot(c[0], c[1])
    if abs(n - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"rotation parameters must be unit norm, got |c|={n:.9g}")
    theta = wrap_angle(math.atan2(c[1], c[0]))
    g = np.array([-c[1], c[0]])
    var = float(g @ np.asarray(params.sigma, dtype=float) @ g)
    return Angle(theta, var)


def rotate(theta, v: np.ndarray) -> np.ndarray:
    """Rotate 2-vectors ``v`` (shape (..., 2)) by angles ``theta`` (broadcast)."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], axis=-1)
