"""Synthetic worlds, waypoint-driven trajectories and noisy sensor data.

Random draws come from two seeded streams so they never interfere:

* the *map* stream (``WorldSpec.seed``) places landmarks, ``x`` then ``y``
  for each landmark in id order;
* the *noise* stream (the run seed) is consumed pose by pose: for pose
  ``k > 0`` three odometry normals for step ``k-1 -> k`` (x, y, heading),
  then two normals (range, bearing) for each visible landmark in increasing
  id order.

Noise normals are drawn even when a scale is zero, so the same run seed
produces the same underlying perturbations at every noise level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from .dataset import Dataset, NoiseSpec, OdometryRecord, SensorSpec
from .errors import InvalidInputError
from .geometry import wrap_angle
from .measurements import RangeBearing

STEP_LENGTH = 0.5
MAX_TURN = math.radians(15.0)
MAX_STEPS = 100_000


@dataclass(frozen=True)
class WorldSpec:
    extent: tuple
    n_landmarks: int
    waypoints: tuple
    loop_visits: tuple = ()
    seed: int = 0
    sensor: SensorSpec = field(default_factory=SensorSpec)
    step_length: float = STEP_LENGTH
    name: str = "custom"

    def __post_init__(self):
        if self.n_landmarks <= 0:
            raise InvalidInputError("n_landmarks must be positive")
        w, h = self.extent
        if len(self.waypoints) < 2:
            raise InvalidInputError("need at least two waypoints")
        for x, y in self.waypoints:
            if not (0 <= x <= w and 0 <= y <= h):
                raise InvalidInputError(f"waypoint ({x}, {y}) outside extent {self.extent}")
        for k in self.loop_visits:
            if not 0 <= k < len(self.waypoints):
                raise InvalidInputError(f"loop visit index {k} out of range")

    def route(self) -> List[np.ndarray]:
        order = self.loop_visits or range(len(self.waypoints))
        return [np.asarray(self.waypoints[k], dtype=float) for k in order]


def _map_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))


def _noise_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))


def generate_map(spec: WorldSpec) -> np.ndarray:
    """Uniformly sampled landmark positions, shape ``(n_landmarks, 2)``."""
    rng = _map_rng(spec.seed)
    w, h = spec.extent
    u = rng.random((spec.n_landmarks, 2))
    return u * np.array([w, h], dtype=float)


def simulate_trajectory(spec: WorldSpec) -> np.ndarray:
    """Noise-free unicycle poses visiting the route at fixed step length.

    The robot starts on the first waypoint facing the second one. Each step
    turns toward the active waypoint by at most ``MAX_TURN`` and then moves
    forward ``step_length``; a waypoint counts as reached once it is closer
    than one step.
    """
    route = spec.route()
    step = spec.step_length
    p = route[0].copy()
    d0 = route[1] - route[0]
    th = math.atan2(d0[1], d0[0])
    poses = [(p[0], p[1], wrap_angle(th))]
    target = 1
    while target < len(route):
        if len(poses) > MAX_STEPS:
            raise InvalidInputError("trajectory did not reach its waypoints")
        goal = route[target]
        if np.linalg.norm(goal - p) < step:
            target += 1
            continue
        want = math.atan2(goal[1] - p[1], goal[0] - p[0])
        turn = max(-MAX_TURN, min(MAX_TURN, wrap_angle(want - th)))
        th = th + turn
        p = p + step * np.array([math.cos(th), math.sin(th)])
        poses.append((p[0], p[1], wrap_angle(th)))
    return np.array(poses)


def _odometry_increment(a, b):
    c, s = math.cos(a[2]), math.sin(a[2])
    dx, dy = b[0] - a[0], b[1] - a[1]
    return np.array([c * dx + s * dy, -s * dx + c * dy, wrap_angle(b[2] - a[2])])


def observe(pose, landmarks: np.ndarray, sensor: SensorSpec):
    """Ids, true ranges and true bearings of the landmarks visible from ``pose``."""
    rel = landmarks - np.asarray(pose[:2])
    r = np.hypot(rel[:, 0], rel[:, 1])
    b = wrap_angle(np.arctan2(rel[:, 1], rel[:, 0]) - pose[2])
    vis = (r <= sensor.max_range) & (r >= sensor.min_range)
    if sensor.fov < 2 * math.pi:
        vis &= np.abs(b) <= 0.5 * sensor.fov
    ids = np.flatnonzero(vis)
    return ids, r[ids], np.atleast_1d(b)[ids]


def simulate_run(
    landmarks: np.ndarray,
    spec: WorldSpec,
    noise: NoiseSpec,
    seed: int = 0,
) -> Dataset:
    """Noisy odometry and range-bearing data along the world's trajectory."""
    return simulate_measurements(simulate_trajectory(spec), landmarks, spec.sensor, noise, seed)


def resimulate(template: Dataset, noise: NoiseSpec, seed: int) -> Dataset:
    """Fresh noise on the template's ground-truth trajectory, map and sensor."""
    return simulate_measurements(
        template.poses_gt, template.landmarks_gt, template.sensor or SensorSpec(), noise, seed
    )


def simulate_measurements(
    poses: np.ndarray,
    landmarks: np.ndarray,
    sensor: SensorSpec,
    noise: NoiseSpec,
    seed: int = 0,
) -> Dataset:
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    landmarks = np.asarray(landmarks, dtype=float).reshape(-1, 2)
    rng = _noise_rng(seed)
    so, srb = noise.odo_sigma, noise.rb_sigma
    vo, vrb = noise.odo_var, noise.rb_var
    odometry: List[OdometryRecord] = []
    obs: List[RangeBearing] = []
    for k, pose in enumerate(poses):
        if k > 0:
            inc = _odometry_increment(poses[k - 1], pose)
            e = rng.standard_normal(3) * so
            odometry.append(
                OdometryRecord(
                    k - 1, k, inc[0] + e[0], inc[1] + e[1], wrap_angle(inc[2] + e[2]), *vo
                )
            )
        ids, r, b = observe(pose, landmarks, sensor)
        e = rng.standard_normal((len(ids), 2)) * srb
        for j, rj, bj, (er, eb) in zip(ids, r, b, e):
            obs.append(
                RangeBearing(k, int(j), max(rj + er, 1e-3), wrap_angle(bj + eb), vrb[0], vrb[1])
            )
    return Dataset(poses, landmarks, odometry, obs, noise, sensor, seed).validate()


def baseline_odometry_trajectory(dataset: Dataset, start=None) -> np.ndarray:
    """Dead-reckoned poses chained from ``start`` (defaults to the origin)."""
    start = np.zeros(3) if start is None else np.asarray(start, dtype=float)
    out = np.zeros((dataset.n_poses, 3))
    out[0] = start
    for k, o in enumerate(dataset.odometry):
        x, y, th = out[k]
        c, s = math.cos(th), math.sin(th)
        out[k + 1] = (x + c * o.dx - s * o.dy, y + s * o.dx + c * o.dy, wrap_angle(th + o.dtheta))
    return out


# Built-in scenarios. m1 and m2 are large maps with several revisits
# (about 1100 and 2050 poses). Their extents leave a wide landmark margin around the route so that a pose
# sees about five landmarks on average, and the map seeds are ones for which
# every pair of consecutive poses shares at least one landmark. s1 is a
# ~200 pose desk-scale loop.
BUILTIN_WORLDS = {
    "m1": WorldSpec(
        extent=(220.0, 190.0),
        n_landmarks=286,
        waypoints=((55, 55), (165, 55), (165, 135), (55, 135), (110, 55), (110, 135), (140, 135)),
        loop_visits=(0, 1, 2, 3, 0, 4, 5, 6),
        seed=7,
        name="m1",
    ),
    "m2": WorldSpec(
        extent=(360.0, 300.0),
        n_landmarks=777,
        waypoints=((90, 90), (270, 90), (270, 210), (180, 210), (180, 90), (90, 210), (180, 150), (90, 150)),
        loop_visits=(0, 1, 2, 3, 4, 0, 5, 3, 6, 7, 0),
        seed=5,
        name="m2",
    ),
    "s1": WorldSpec(
        extent=(45.0, 35.0),
        n_landmarks=60,
        waypoints=((5, 5), (35, 5), (35, 25), (20, 25), (20, 5)),
        loop_visits=(0, 1, 2, 3, 4, 0),
        seed=3,
        name="s1",
    ),
}


def load_world(name_or_path) -> WorldSpec:
    """A built-in world by name, or a custom one from a TOML file.

    TOML keys: ``extent = [w, h]``, ``n_landmarks``, ``waypoints = [[x, y], ...]``,
    optional ``loop_visits``, ``seed``, ``step_length`` and a ``[sensor]``
    table with ``max_range``, ``fov_deg``, ``min_range``.
    """
    key = str(name_or_path).lower()
    if key in BUILTIN_WORLDS:
        return BUILTIN_WORLDS[key]
    path = Path(name_or_path)
    if not path.exists():
        raise InvalidInputError(
            f"unknown map {name_or_path!r}; expected one of {sorted(BUILTIN_WORLDS)} or a .toml file"
        )
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    sensor_cfg = cfg.get("sensor", {})
    sensor = SensorSpec(
        max_range=float(sensor_cfg.get("max_range", SensorSpec.max_range)),
        fov=math.radians(float(sensor_cfg.get("fov_deg", 360.0))),
        min_range=float(sensor_cfg.get("min_range", SensorSpec.min_range)),
    )
    try:
        return WorldSpec(
            extent=tuple(float(v) for v in cfg["extent"]),
            n_landmarks=int(cfg["n_landmarks"]),
            waypoints=tuple(tuple(float(v) for v in w) for w in cfg["waypoints"]),
            loop_visits=tuple(int(v) for v in cfg.get("loop_visits", ())),
            seed=int(cfg.get("seed", 0)),
            sensor=sensor,
            step_length=float(cfg.get("step_length", STEP_LENGTH)),
            name=path.stem,
        )
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing key {exc}") from exc


def make_dataset(world: WorldSpec, alpha: float, beta: float, seed: int) -> Dataset:
    landmarks = generate_map(world)
    return simulate_run(landmarks, world, NoiseSpec(alpha, beta), seed)
