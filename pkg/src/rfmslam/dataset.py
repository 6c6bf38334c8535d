"""In-memory dataset: ground truth, odometry and range-bearing records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DatasetValidationError, InvalidInputError
from .measurements import RangeBearing

BASE_ODO = (0.05, 0.05, 0.6)  # m, m, deg
BASE_RB = (0.05, 0.6)  # m, deg


@dataclass(frozen=True)
class NoiseSpec:
    """Noise scales ``alpha`` (odometry) and ``beta`` (range-bearing).

    The injected standard deviations are ``alpha * base_odo`` and
    ``beta * base_rb``. A scale of zero means noise-free data; the variances
    written alongside such data fall back to the base values so downstream
    weighting stays well defined.
    """

    alpha: float = 1.0
    beta: float = 1.0
    base_odo: tuple = BASE_ODO
    base_rb: tuple = BASE_RB

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInputError("noise scales must be non-negative")

    @property
    def odo_sigma(self) -> np.ndarray:
        """Injected odometry sigmas (m, m, rad)."""
        sx, sy, st = self.base_odo
        return self.alpha * np.array([sx, sy, math.radians(st)])

    @property
    def rb_sigma(self) -> np.ndarray:
        """Injected range-bearing sigmas (m, rad)."""
        sr, sb = self.base_rb
        return self.beta * np.array([sr, math.radians(sb)])

    @property
    def odo_var(self) -> np.ndarray:
        """Variances recorded with odometry."""
        sx, sy, st = self.base_odo
        base = np.array([sx, sy, math.radians(st)])
        return (self.alpha or 1.0) ** 2 * base**2

    @property
    def rb_var(self) -> np.ndarray:
        sr, sb = self.base_rb
        base = np.array([sr, math.radians(sb)])
        return (self.beta or 1.0) ** 2 * base**2


@dataclass(frozen=True)
class OdometryRecord:
    from_id: int
    to_id: int
    dx: float
    dy: float
    dtheta: float
    var_x: float
    var_y: float
    var_t: float


@dataclass(frozen=True)
class SensorSpec:
    max_range: float = 15.0
    fov: float = 2 * math.pi
    min_range: float = 1.0


@dataclass
class Dataset:
    poses_gt: np.ndarray
    landmarks_gt: np.ndarray
    odometry: List[OdometryRecord]
    observations: List[RangeBearing]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    sensor: Optional[SensorSpec] = None
    seed: Optional[int] = None

    def __post_init__(self):
        self.poses_gt = np.asarray(self.poses_gt, dtype=float).reshape(-1, 3)
        self.landmarks_gt = np.asarray(self.landmarks_gt, dtype=float).reshape(-1, 2)

    @property
    def n_poses(self) -> int:
        return len(self.poses_gt)

    @property
    def n_landmarks(self) -> int:
        return len(self.landmarks_gt)

    def observations_at(self):
        """Range-bearing records grouped by pose id."""
        groups = [[] for _ in range(self.n_poses)]
        for z in self.observations:
            groups[z.pose_id].append(z)
        return groups

    def trajectory_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.poses_gt[:, :2], axis=0), axis=1)))

    def validate(self) -> "Dataset":
        n, L = self.n_poses, self.n_landmarks
        if n == 0:
            raise DatasetValidationError("dataset has no poses")
        if not (np.all(np.isfinite(self.poses_gt)) and np.all(np.isfinite(self.landmarks_gt))):
            raise DatasetValidationError("non-finite ground truth")
        if len(self.odometry) != n - 1:
            raise DatasetValidationError(
                f"expected {n - 1} odometry records for {n} poses, got {len(self.odometry)}"
            )
        for k, o in enumerate(self.odometry):
            if (o.from_id, o.to_id) != (k, k + 1):
                raise DatasetValidationError(
                    f"odometry record {k} links {o.from_id}->{o.to_id}, expected {k}->{k + 1}"
                )
            if min(o.var_x, o.var_y, o.var_t) <= 0:
                raise DatasetValidationError(f"odometry record {k} has non-positive variance")
        seen = set()
        for z in self.observations:
            if not 0 <= z.pose_id < n:
                raise DatasetValidationError(f"RB references missing pose {z.pose_id}")
            if not 0 <= z.landmark_id < L:
                raise DatasetValidationError(f"RB references missing landmark {z.landmark_id}")
            key = (z.pose_id, z.landmark_id)
            if key in seen:
                raise DatasetValidationError(f"duplicate RB record for pose/landmark {key}")
            seen.add(key)
        return self
