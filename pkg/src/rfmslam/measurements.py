"""Range-bearing inversion and correlated feature-to-feature displacements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class RangeBearing:
    pose_id: int
    landmark_id: int
    range: float
    bearing: float
    sigma_r2: float
    sigma_b2: float

    def __post_init__(self):
        vals = (self.range, self.bearing, self.sigma_r2, self.sigma_b2)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError(f"non-finite range-bearing record {self}")
        if self.range <= 0:
            raise InvalidInputError(f"range must be positive, got {self.range}")
        if not -math.pi < self.bearing <= math.pi:
            raise InvalidInputError(f"bearing {self.bearing} outside (-pi, pi]")
        if self.sigma_r2 <= 0 or self.sigma_b2 <= 0:
            raise InvalidInputError("range-bearing variances must be positive")


@dataclass(frozen=True)
class LocalFeaturePosition:
    pose_id: int
    landmark_id: int
    delta: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True, eq=False)
class LocalDisplacementSet:
    """All pairwise landmark displacements seen from one pose.

    ``d`` stacks ``delta_j - delta_i`` for every ``(i, j)`` in ``pairs``
    (ordered by landmark id). Their covariance is fully determined by the
    per-landmark blocks, so it is only materialized on request: ``cov``
    gives the whole matrix and ``pair_cov`` any subset of it.
    """

    pose_id: int
    landmarks: tuple
    deltas: np.ndarray = field(repr=False)
    delta_covs: np.ndarray = field(repr=False)
    pairs: tuple = field(repr=False)
    local_idx: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    index: dict = field(repr=False)

    def __len__(self):
        return len(self.pairs)

    def rows(self, pair_pos: Sequence[int]) -> np.ndarray:
        """Row indices into ``d`` for the given pair positions."""
        pair_pos = np.asarray(pair_pos, dtype=int)
        return np.stack([2 * pair_pos, 2 * pair_pos + 1], axis=1).ravel()

    def selection(self, pair_pos: Sequence[int]) -> np.ndarray:
        """Linear map from stacked local positions to the selected pair displacements."""
        pair_pos = np.asarray(pair_pos, dtype=int)
        n = len(self.landmarks)
        S = np.zeros((2 * len(pair_pos), 2 * n))
        r = np.arange(len(pair_pos))
        a, b = self.local_idx[pair_pos, 0], self.local_idx[pair_pos, 1]
        for k in range(2):
            S[2 * r + k, 2 * a + k] = -1.0
            S[2 * r + k, 2 * b + k] = 1.0
        return S

    def pair_cov(self, pair_pos: Sequence[int]) -> np.ndarray:
        S = self.selection(pair_pos)
        n = len(self.landmarks)
        Q = np.zeros((2 * n, 2 * n))
        for a in range(n):
            Q[2 * a:2 * a + 2, 2 * a:2 * a + 2] = self.delta_covs[a]
        cov = S @ Q @ S.T
        return 0.5 * (cov + cov.T)

    @cached_property
    def cov(self) -> np.ndarray:
        return self.pair_cov(np.arange(len(self.pairs)))


def inversion_jacobian(r: float, phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -r * s], [s, r * c]])


def invert_range_bearing(z: RangeBearing) -> LocalFeaturePosition:
    c, s = math.cos(z.bearing), math.sin(z.bearing)
    G = inversion_jacobian(z.range, z.bearing)
    cov = G @ np.diag([z.sigma_r2, z.sigma_b2]) @ G.T
    return LocalFeaturePosition(
        z.pose_id, z.landmark_id, np.array([z.range * c, z.range * s]), 0.5 * (cov + cov.T)
    )


def pairwise_relative_displacements(
    obs: Sequence[RangeBearing], pose_id: int | None = None
) -> LocalDisplacementSet:
    """Relative displacements between every pair of landmarks seen at one pose.

    Fewer than two observations give an empty set. ``pose_id`` is only
    needed when ``obs`` is empty.
    """
    obs = sorted(obs, key=lambda z: z.landmark_id)
    if not obs and pose_id is None:
        raise InvalidInputError("pose_id is required when there are no observations")
    if pose_id is None:
        pose_id = obs[0].pose_id
    if any(z.pose_id != pose_id for z in obs):
        raise InvalidInputError("observations come from more than one pose")
    ids = tuple(z.landmark_id for z in obs)
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"duplicate landmark id observed at pose {pose_id}")

    local = [invert_range_bearing(z) for z in obs]
    n = len(local)
    deltas = np.array([f.delta for f in local]).reshape(n, 2)
    covs = np.array([f.cov for f in local]).reshape(n, 2, 2)
    first, second = np.triu_indices(n, k=1)
    local_idx = np.column_stack([first, second]).astype(int).reshape(-1, 2)
    d = (deltas[second] - deltas[first]).ravel()
    pairs = tuple((ids[a], ids[b]) for a, b in local_idx)
    index = {p: k for k, p in enumerate(pairs)}
    return LocalDisplacementSet(pose_id, ids, deltas, covs, pairs, local_idx, d, index)


def common_pairs(dp: LocalDisplacementSet, dq: LocalDisplacementSet):
    """Positions (in ``dp`` and ``dq``) of every landmark pair both sets contain."""
    shared = sorted(set(dp.landmarks) & set(dq.landmarks))
    keys = [(a, b) for i, a in enumerate(shared) for b in shared[i + 1:]]
    return _positions(dp, dq, keys)


def spanning_common_pairs(dp: LocalDisplacementSet, dq: LocalDisplacementSet):
    """A linearly independent subset of the common pairs.

    Pairs ``(k0, k)`` from the smallest shared landmark ``k0`` to each other
    shared landmark. Every other common displacement is a difference of two
    of these, in the data and in the noise alike.
    """
    shared = sorted(set(dp.landmarks) & set(dq.landmarks))
    keys = [(shared[0], b) for b in shared[1:]] if shared else []
    return _positions(dp, dq, keys)


def _positions(dp, dq, keys):
    ia = np.array([dp.index[k] for k in keys], dtype=int)
    ib = np.array([dq.index[k] for k in keys], dtype=int)
    return ia, ib
