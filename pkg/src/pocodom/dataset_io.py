"""KITTI-odometry style scans and poses, trajectory and map writers.

Scans are raw little-endian float32 records ``(x, y, z, reflectance)``.
Pose files hold one row-major ``3 x 4`` matrix ``[R|t]`` per line.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import MalformedFile, MalformedPose
from .geometry import KITTI, FrameConvention, PointCloud, RigidTransform

POSE_ORTHONORMAL_TOL = 1e-3
_RECORD = np.dtype("<f4")


def read_kitti_scan_counted(path, sweep_index: int = 0):
    """Like :func:`read_kitti_scan` but also returns the number of dropped points."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise MalformedFile(f"cannot read scan {path}: {exc}") from exc
    if len(raw) % 16:
        raise MalformedFile(f"{path}: {len(raw)} bytes is not a whole number of 16-byte records")
    rec = np.frombuffer(raw, dtype=_RECORD).reshape(-1, 4)
    xyz = rec[:, :3].astype(np.float64)
    finite = np.all(np.isfinite(xyz), axis=1)
    return PointCloud(xyz[finite], sweep_index=sweep_index), int((~finite).sum())


def read_kitti_scan(path, sweep_index: int = 0) -> PointCloud:
    """Points of one binary scan; reflectance is discarded, non-finite points dropped."""
    return read_kitti_scan_counted(path, sweep_index)[0]


def write_kitti_scan(path, points, reflectance=None):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rec = np.zeros((len(pts), 4), dtype=_RECORD)
    rec[:, :3] = pts
    if reflectance is not None:
        rec[:, 3] = reflectance
    Path(path).write_bytes(rec.tobytes())


def _fmt(v):
    # adding 0.0 turns -0.0 into 0.0
    return f"{float(v) + 0.0:.17g}"


def _pose_from_fields(values, where):
    try:
        m = np.array([float(v) for v in values]).reshape(3, 4)
    except ValueError as exc:
        raise MalformedPose(f"{where}: {exc}") from exc
    if not np.all(np.isfinite(m)):
        raise MalformedPose(f"{where}: non-finite value")
    try:
        return RigidTransform.from_matrix(m, orthonormal_tol=POSE_ORTHONORMAL_TOL)
    except ValueError as exc:
        raise MalformedPose(f"{where}: {exc}") from exc


def read_kitti_poses(path):
    """One transform per non-empty line of 12 reals.

    Rotation blocks off by less than 1e-3 are snapped to the nearest rotation.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedPose(f"cannot read poses {path}: {exc}") from exc
    poses = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields_ = line.split()
        if not fields_:
            continue
        if len(fields_) != 12:
            raise MalformedPose(f"{path}:{lineno}: expected 12 fields, got {len(fields_)}")
        poses.append(_pose_from_fields(fields_, f"{path}:{lineno}"))
    return poses


def read_tum_poses(path):
    """``(indices, poses)`` from ``timestamp tx ty tz qx qy qz qw`` lines.

    Timestamps are taken as sweep indices, which is how
    :func:`write_trajectory` writes them.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedPose(f"cannot read poses {path}: {exc}") from exc
    indices, poses = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        f = line.split()
        if not f or f[0].startswith("#"):
            continue
        if len(f) != 8:
            raise MalformedPose(f"{path}:{lineno}: expected 8 fields, got {len(f)}")
        try:
            v = np.array([float(x) for x in f])
        except ValueError as exc:
            raise MalformedPose(f"{path}:{lineno}: {exc}") from exc
        q = v[4:]
        norm = np.linalg.norm(q)
        if not np.all(np.isfinite(v)) or abs(norm - 1.0) > POSE_ORTHONORMAL_TOL:
            raise MalformedPose(f"{path}:{lineno}: quaternion is not unit length")
        R = Rotation.from_quat(q / norm).as_matrix()
        indices.append(int(round(v[0])))
        poses.append(RigidTransform(R, v[1:4]).orthonormalized())
    return indices, poses


def trajectory_format(path):
    """``"tum-8"`` or ``"kitti-12"`` judged by the field count of the first pose line."""
    with open(path) as fh:
        first = next((ln for ln in fh if ln.strip() and not ln.startswith("#")), "")
    return "tum-8" if len(first.split()) == 8 else "kitti-12"


def read_trajectory(path):
    """``(indices, poses)`` from a kitti-12 or tum-8 file.

    kitti-12 files carry no indices; poses are numbered from 0.
    """
    if trajectory_format(path) == "tum-8":
        return read_tum_poses(path)
    poses = read_kitti_poses(path)
    return list(range(len(poses))), poses


TRAJECTORY_FORMATS = ("kitti-12", "tum-8")


def write_trajectory(traj, path, format: str = "kitti-12"):
    """Write poses as kitti-12 (``[R|t]`` rows) or tum-8 (index, t, quaternion x y z w).

    ``traj`` is a :class:`~pocodom.pipeline.Trajectory` or a list of transforms.
    """
    if format not in TRAJECTORY_FORMATS:
        raise ValueError(f"unknown trajectory format {format!r}")
    if hasattr(traj, "indices"):
        indices, poses = traj.indices, traj.poses
    else:
        poses = list(traj)
        indices = range(len(poses))
    lines = []
    for index, pose in zip(indices, poses):
        if format == "kitti-12":
            lines.append(" ".join(_fmt(v) for v in pose.matrix[:3].ravel()))
        else:
            q = Rotation.from_matrix(pose.rotation).as_quat()
            if q[3] < 0:
                q = -q
            lines.append(" ".join([str(int(index)), *(_fmt(v) for v in (*pose.translation, *q))]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


MAP_FORMATS = ("pcd-ascii", "xyz")


def write_map(points, path, format: str = "pcd-ascii"):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if format not in MAP_FORMATS:
        raise ValueError(f"unknown map format {format!r}")
    if len(pts) == 0:
        raise ValueError("refusing to write an empty map")
    body = "\n".join(" ".join(_fmt(v) for v in p) for p in pts) + "\n"
    with open(path, "w") as fh:
        if format == "pcd-ascii":
            fh.write(
                "# .PCD v0.7 - Point Cloud Data file format\n"
                "VERSION 0.7\nFIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\n"
                f"WIDTH {len(pts)}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
                f"POINTS {len(pts)}\nDATA ascii\n"
            )
        fh.write(body)


def read_map(path):
    """Points of a map written by :func:`write_map` (either format)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines and (lines[0].startswith("#") or lines[0].startswith("VERSION")):
        try:
            start = next(i for i, ln in enumerate(lines) if ln.startswith("DATA")) + 1
        except StopIteration:
            raise MalformedFile(f"{path}: PCD header without DATA line") from None
        if lines[start - 1].split()[1] != "ascii":
            raise MalformedFile(f"{path}: only ascii PCD is supported")
        lines = lines[start:]
    rows = [ln.split() for ln in lines if ln.strip()]
    if any(len(r) != 3 for r in rows):
        raise MalformedFile(f"{path}: expected 3 coordinates per line")
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def _scan_number(p: Path):
    try:
        return int(p.stem)
    except ValueError:
        raise MalformedFile(f"scan file name {p.name!r} is not numeric") from None


@dataclass
class SweepSource:
    """An ordered directory of binary scans with optional ground truth.

    ``calibration`` maps sensor coordinates into the frame the ground-truth
    poses are expressed in (identity when they are already sensor poses).
    """

    root: Path
    scans: list
    convention: FrameConvention = KITTI
    truth: list | None = None
    calibration: RigidTransform = field(default_factory=RigidTransform)
    dropped: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.truth is not None and len(self.truth) < len(self.scans):
            raise MalformedPose(
                f"{len(self.truth)} ground-truth poses for {len(self.scans)} scans"
            )

    @classmethod
    def open(cls, root, poses=None, convention: FrameConvention = KITTI, calibration=None):
        """Scans are ``*.bin`` files in ``root/velodyne`` (or ``root`` itself).

        Ground truth is read from ``poses`` if given, else from
        ``root/poses.txt`` when that file exists.
        """
        root = Path(root)
        if not root.is_dir():
            raise MalformedFile(f"data directory {root} does not exist")
        scan_dir = root / "velodyne" if (root / "velodyne").is_dir() else root
        scans = sorted(scan_dir.glob("*.bin"), key=_scan_number)
        if not scans:
            raise MalformedFile(f"no .bin scans found in {scan_dir}")
        if poses is None and (root / "poses.txt").is_file():
            poses = root / "poses.txt"
        truth = read_kitti_poses(poses) if poses is not None else None
        return cls(root, scans, convention, truth, calibration or RigidTransform())

    def __len__(self):
        return len(self.scans)

    def index_of(self, position):
        return _scan_number(self.scans[position])

    def __iter__(self):
        for path in self.scans:
            index = _scan_number(path)
            cloud, dropped = read_kitti_scan_counted(path, index)
            if dropped:
                self.dropped[index] = dropped
            yield cloud

    def sensor_truth(self):
        """Ground truth as sensor poses: ``C^-1 T C`` for calibration ``C``."""
        if self.truth is None:
            return None
        C, Ci = self.calibration, self.calibration.inverse()
        return [Ci @ T @ C for T in self.truth]


def write_sequence(root, clouds, poses=None):
    """Lay out clouds as ``root/velodyne/NNNNNN.bin`` and poses as ``root/poses.txt``."""
    root = Path(root)
    os.makedirs(root / "velodyne", exist_ok=True)
    for k, cloud in enumerate(clouds):
        pts = cloud.points if isinstance(cloud, PointCloud) else cloud
        write_kitti_scan(root / "velodyne" / f"{k:06d}.bin", pts)
    if poses is not None:
        write_trajectory(list(poses), root / "poses.txt", "kitti-12")
    return root
