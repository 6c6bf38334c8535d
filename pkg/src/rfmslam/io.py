"""Line-oriented text formats for datasets and estimates.

Dataset records (one per line, space separated)::

    # comment
    SEED <u64>
    NOISE <alpha> <beta> <sr_m> <sb_deg> <sx_m> <sy_m> <st_deg>
    SENSOR <max_range_m> <fov_rad> <min_range_m>
    POSE_GT <id> <x_m> <y_m> <theta_rad>
    LANDMARK_GT <id> <x_m> <y_m>
    ODOM <from_id> <to_id> <dx_m> <dy_m> <dtheta_rad> <var_x> <var_y> <var_t>
    RB <pose_id> <lm_id> <range_m> <bearing_rad> <var_r> <var_b>

``NOISE`` carries the scale factors followed by the unscaled base sigmas.
``SENSOR`` is optional. Dataset floats are written with ``repr`` so a
serialized file parses back to bit-identical values.

Estimate records: ``POSE_EST <id> <x> <y> <theta>`` and
``LANDMARK_EST <id> <x> <y>``, 9 significant digits.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .dataset import Dataset, NoiseSpec, OdometryRecord, SensorSpec
from .errors import DatasetParseError, DatasetValidationError, InvalidInputError
from .measurements import RangeBearing
from .position_solver import SlamEstimate

DATASET_HEADER = "# rfmslam dataset v1"
ESTIMATE_HEADER = "# rfmslam estimate v1"

# tag -> (number of fields after the tag, how many leading fields are integers)
_DATASET_ARITY = {
    "SEED": (1, 1),
    "NOISE": (7, 0),
    "SENSOR": (3, 0),
    "POSE_GT": (4, 1),
    "LANDMARK_GT": (3, 1),
    "ODOM": (8, 2),
    "RB": (6, 2),
}
_ESTIMATE_ARITY = {"POSE_EST": (4, 1), "LANDMARK_EST": (3, 1)}


def _fields(tag, parts, lineno, arity):
    n, n_int = arity[tag]
    if len(parts) - 1 != n:
        raise DatasetParseError(f"{tag} expects {n} fields, got {len(parts) - 1}", lineno)
    out = []
    for k, tok in enumerate(parts[1:]):
        try:
            if k < n_int:
                v = int(tok)
                if v < 0:
                    raise ValueError
            else:
                v = float(tok)
                if not math.isfinite(v):
                    raise DatasetParseError(f"non-finite value {tok!r}", lineno)
        except ValueError:
            kind = "non-negative integer" if k < n_int else "number"
            raise DatasetParseError(f"{tag} field {k + 1}: expected {kind}, got {tok!r}", lineno) from None
        out.append(v)
    return out


def _records(text: str, arity):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag not in arity:
            raise DatasetParseError(f"unknown record tag {tag!r}", lineno)
        yield lineno, tag, _fields(tag, parts, lineno, arity)


def _dense(table: Dict[int, tuple], what: str, width: int) -> np.ndarray:
    n = len(table)
    missing = sorted(set(range(n)) - set(table))
    if missing:
        raise DatasetValidationError(f"{what} ids must be dense from 0; missing {missing[:5]}")
    out = np.zeros((n, width))
    for k, v in table.items():
        out[k] = v
    return out


def parse_dataset(text: str) -> Dataset:
    """Parse dataset text and validate its cross-references."""
    seed: Optional[int] = None
    noise = NoiseSpec(0.0, 0.0)
    sensor: Optional[SensorSpec] = None
    poses: Dict[int, tuple] = {}
    lms: Dict[int, tuple] = {}
    odo: List[OdometryRecord] = []
    obs: List[RangeBearing] = []
    for lineno, tag, f in _records(text, _DATASET_ARITY):
        if tag == "SEED":
            seed = f[0]
        elif tag == "NOISE":
            try:
                noise = NoiseSpec(f[0], f[1], base_odo=(f[4], f[5], f[6]), base_rb=(f[2], f[3]))
            except ValueError as exc:
                raise DatasetParseError(str(exc), lineno) from None
        elif tag == "SENSOR":
            sensor = SensorSpec(max_range=f[0], fov=f[1], min_range=f[2])
        elif tag in ("POSE_GT", "LANDMARK_GT"):
            table = poses if tag == "POSE_GT" else lms
            if f[0] in table:
                raise DatasetValidationError(f"line {lineno}: duplicate {tag} id {f[0]}")
            table[f[0]] = tuple(f[1:])
        elif tag == "ODOM":
            odo.append(OdometryRecord(*f))
        else:
            try:
                obs.append(RangeBearing(*f))
            except InvalidInputError as exc:
                raise DatasetParseError(str(exc), lineno) from None
    ds = Dataset(
        _dense(poses, "POSE_GT", 3), _dense(lms, "LANDMARK_GT", 2), odo, obs, noise, sensor, seed
    )
    return ds.validate()


def serialize_dataset(ds: Dataset) -> str:
    r = repr
    lines = [DATASET_HEADER]
    if ds.seed is not None:
        lines.append(f"SEED {int(ds.seed)}")
    nz = ds.noise
    sr, sb = nz.base_rb
    sx, sy, st = nz.base_odo
    lines.append(
        "NOISE " + " ".join(r(float(v)) for v in (nz.alpha, nz.beta, sr, sb, sx, sy, st))
    )
    if ds.sensor is not None:
        s = ds.sensor
        lines.append(f"SENSOR {r(float(s.max_range))} {r(float(s.fov))} {r(float(s.min_range))}")
    for k, (x, y, th) in enumerate(ds.poses_gt):
        lines.append(f"POSE_GT {k} {r(float(x))} {r(float(y))} {r(float(th))}")
    for k, (x, y) in enumerate(ds.landmarks_gt):
        lines.append(f"LANDMARK_GT {k} {r(float(x))} {r(float(y))}")
    for o in ds.odometry:
        vals = (o.dx, o.dy, o.dtheta, o.var_x, o.var_y, o.var_t)
        lines.append(f"ODOM {o.from_id} {o.to_id} " + " ".join(r(float(v)) for v in vals))
    for z in ds.observations:
        vals = (z.range, z.bearing, z.sigma_r2, z.sigma_b2)
        lines.append(f"RB {z.pose_id} {z.landmark_id} " + " ".join(r(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def _g9(v: float) -> str:
    # + 0.0 turns -0.0 into 0.0 so zero always prints as "0"
    return f"{float(v) + 0.0:.9g}"


def serialize_estimate(est: SlamEstimate) -> str:
    lines = [ESTIMATE_HEADER]
    for k, (x, y, th) in enumerate(est.poses):
        lines.append(f"POSE_EST {k} {_g9(x)} {_g9(y)} {_g9(th)}")
    for j, (x, y) in zip(est.landmark_ids, est.l):
        lines.append(f"LANDMARK_EST {int(j)} {_g9(x)} {_g9(y)}")
    return "\n".join(lines) + "\n"


def parse_estimate(text: str) -> SlamEstimate:
    poses: Dict[int, tuple] = {}
    lms: Dict[int, tuple] = {}
    for lineno, tag, f in _records(text, _ESTIMATE_ARITY):
        table = poses if tag == "POSE_EST" else lms
        if f[0] in table:
            raise DatasetValidationError(f"line {lineno}: duplicate {tag} id {f[0]}")
        table[f[0]] = tuple(f[1:])
    P = _dense(poses, "POSE_EST", 3)
    ids = np.array(sorted(lms), dtype=int)
    L = np.array([lms[j] for j in ids], dtype=float).reshape(-1, 2)
    return SlamEstimate(P[:, :2], L, P[:, 2], ids)


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


def write_dataset(path, ds: Dataset) -> None:
    Path(path).write_text(serialize_dataset(ds), encoding="utf-8")


def read_estimate(path) -> SlamEstimate:
    return parse_estimate(Path(path).read_text(encoding="utf-8"))


def write_estimate(path, est: SlamEstimate) -> None:
    Path(path).write_text(serialize_estimate(est), encoding="utf-8")
