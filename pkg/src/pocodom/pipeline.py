"""Per-sweep odometry and mapping.

Each sweep goes through ground fitting, small object removal, rectification,
rasterisation, POC coarse matching against the previous sweep and
point-to-plane ICP refinement.  Relative motions are chained into absolute
poses and the registered points are merged into a voxel-deduplicated map.

Convention: the relative transform of sweep k+1 maps its points into the
frame of sweep k, so ``pose[k+1] = pose[k] @ relative[k+1]`` and
``pose[k]`` maps sweep-k points into the world (= first sweep) frame.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import EmptyGrid, NoCorrespondences, OdometryError, SingularSystem
from .geometry import (
    KITTI,
    Frame,
    FrameConvention,
    PointCloud,
    RigidTransform,
    apply,
    compose,
    concat,
    voxel_downsample,
    voxel_keys,
)
from .grid import GridParams, OccupancyGrid, rasterize
from .ground import RansacParams, estimate_ground, rectification
from .icp import IcpParams, NormalCloud, estimate_normals, point_to_plane_icp
from .objects import ClusterParams, separate_small_objects
from .poc import CoarseTransform, PocParams, estimate_coarse

log = logging.getLogger(__name__)

REORTHONORMALIZE_EVERY = 100


@dataclass(frozen=True)
class PipelineConfig:
    ransac: RansacParams = RansacParams()
    cluster: ClusterParams = ClusterParams()
    grid: GridParams = GridParams()
    icp: IcpParams = IcpParams()
    poc: PocParams = PocParams()
    frame_skip: int = 1
    map_voxel: float = 0.2
    input_voxel: float = 0.1
    ground_threshold: float = 0.2
    enable_object_removal: bool = True
    grid_include_ground: bool = False
    rng_seed: int = 0
    frame_convention: FrameConvention = KITTI

    def __post_init__(self):
        if self.frame_skip < 1:
            raise ValueError("frame_skip must be >= 1")
        if self.map_voxel < 0 or self.input_voxel < 0:
            raise ValueError("voxel sizes must be non-negative")

    def as_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "__dataclass_fields__") and not isinstance(value, FrameConvention):
                for g in fields(value):
                    out[f"{f.name}.{g.name}"] = getattr(value, g.name)
            else:
                out[f.name] = value
        return out


@dataclass(frozen=True)
class Trajectory:
    """Absolute poses keyed by sweep index, strictly increasing."""

    indices: tuple = ()
    poses: tuple = ()

    def __post_init__(self):
        if len(self.indices) != len(self.poses):
            raise ValueError("indices and poses differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("sweep indices must be strictly increasing")

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.indices, self.poses))

    def __getitem__(self, i):
        return self.poses[i]

    def append(self, index, pose):
        return Trajectory(self.indices + (index,), self.poses + (pose,))

    def positions(self):
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """What the next sweep needs from the previous one."""

    cloud: PointCloud
    normals: NormalCloud
    grid: OccupancyGrid | None
    rectification: RigidTransform


@dataclass(frozen=True)
class SweepReport:
    sweep_index: int
    pose: RigidTransform
    coarse_confidence: float = float("nan")
    coarse_theta: float = float("nan")
    icp_rmse: float = float("nan")
    icp_iterations: int = 0
    coarse_fallback: bool = False
    icp_fallback: bool = False
    extrapolated: bool = False
    points_in: int = 0
    points_kept: int = 0
    cycle_ms: float = 0.0
    error: str = ""

    @property
    def degraded(self):
        return self.coarse_fallback or self.icp_fallback or self.extrapolated or bool(self.error)

    COLUMNS = (
        "sweep", "tx", "ty", "tz", "roll", "pitch", "yaw", "coarse_confidence", "coarse_theta",
        "icp_rmse", "icp_iterations", "coarse_fallback", "icp_fallback", "extrapolated",
        "degraded", "points_in", "points_kept", "cycle_ms", "error",
    )

    def row(self):
        a, b, g = self.pose.euler()
        t = self.pose.translation
        return [
            self.sweep_index, *(f"{v:.9g}" for v in (*t, a, b, g)),
            f"{self.coarse_confidence:.6g}", f"{self.coarse_theta:.9g}", f"{self.icp_rmse:.6g}",
            self.icp_iterations, int(self.coarse_fallback), int(self.icp_fallback),
            int(self.extrapolated), int(self.degraded), self.points_in, self.points_kept,
            f"{self.cycle_ms:.3f}", self.error,
        ]


@dataclass(frozen=True, eq=False)
class VoxelMap:
    """Accumulated world points, at most one per voxel (first one wins).

    ``voxel = 0`` keeps every point.  ``keys`` holds the sorted voxel keys of
    the stored points so an insertion costs a binary search, not a re-sort.
    """

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    voxel: float = 0.2
    keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.points)

    def insert(self, pts):
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        if self.voxel <= 0:
            return VoxelMap(np.vstack([self.points, pts]), self.voxel, self.keys)
        k = voxel_keys(pts, self.voxel)
        _, first = np.unique(k, return_index=True)
        first = np.sort(first)
        k, pts = k[first], pts[first]
        pos = np.searchsorted(self.keys, k)
        present = np.zeros(len(k), dtype=bool)
        inside = pos < len(self.keys)
        present[inside] = self.keys[pos[inside]] == k[inside]
        new = ~present
        order = np.argsort(k[new], kind="stable")
        keys = np.insert(self.keys, pos[new][order], k[new][order])
        return VoxelMap(np.vstack([self.points, pts[new]]), self.voxel, keys)


@dataclass(frozen=True, eq=False)
class PipelineState:
    previous: SweepRecord | None = None
    trajectory: Trajectory = Trajectory()
    map: VoxelMap = VoxelMap()
    last_relative: RigidTransform = RigidTransform()
    compositions: int = 0
    reports: tuple = ()


def map_insert(map_points, cloud_world, voxel: float = 0.2):
    """Union of the map with new world-frame points, one point per voxel.

    Points already in the map win over new points in the same voxel;
    ``voxel = 0`` is a plain union.
    """
    if isinstance(cloud_world, PointCloud):
        if cloud_world.frame is not Frame.WORLD:
            raise ValueError("map_insert expects a world-frame cloud")
        cloud_world = cloud_world.points
    base = VoxelMap(voxel=voxel).insert(np.asarray(map_points).reshape(-1, 3))
    return base.insert(cloud_world).points


def preprocess(cloud: PointCloud, config: PipelineConfig):
    """Ground fit, optional small object removal and rectification.

    Returns ``(kept_cloud, grid_cloud, rectification)``; ``kept_cloud`` is in
    the sensor frame and ``grid_cloud`` is the rectified non-ground part used
    for rasterisation.
    """
    conv = config.frame_convention
    pts = voxel_downsample(cloud.points, config.input_voxel)
    cloud = cloud.with_points(pts)
    plane = estimate_ground(cloud, config.ransac, conv, seed=config.rng_seed + cloud.sweep_index)
    if config.enable_object_removal:
        ground, non_ground = separate_small_objects(
            cloud, plane, config.cluster, config.ground_threshold, conv
        )
    else:
        mask = np.abs(plane.distance(cloud.points)) <= config.ground_threshold
        ground, non_ground = cloud.select(mask), cloud.select(~mask)
    kept = concat(non_ground, ground)
    rect = rectification(plane, conv)
    grid_cloud = apply(rect, kept if config.grid_include_ground else non_ground)
    return kept, grid_cloud, rect


def _record(kept, grid_cloud, rect, config):
    conv = config.frame_convention
    normals = estimate_normals(kept, config.icp.normal_neighbors, up=conv.up_vector, radius=config.icp.normal_radius)
    try:
        grid = rasterize(grid_cloud, config.grid, conv)
    except EmptyGrid:
        grid = None
    return SweepRecord(kept, normals, grid, rect)


def _chain(state: PipelineState, relative: RigidTransform):
    pose = compose(state.trajectory.poses[-1], relative)
    count = state.compositions + 1
    if count % REORTHONORMALIZE_EVERY == 0:
        pose = pose.orthonormalized()
    return pose, count


def process_sweep(state: PipelineState, cloud: PointCloud, config: PipelineConfig = PipelineConfig()):
    """Register ``cloud`` against the previous sweep; returns ``(state, pose)``."""
    if len(cloud) == 0:
        raise ValueError(f"sweep {cloud.sweep_index} is empty")
    t0 = time.perf_counter()
    kept, grid_cloud, rect = preprocess(cloud, config)
    record = _record(kept, grid_cloud, rect, config)

    if state.previous is None:
        pose = RigidTransform()
        trajectory = Trajectory().append(cloud.sweep_index, pose)
        new_map = VoxelMap(voxel=config.map_voxel).insert(cloud.points)
        report = SweepReport(
            cloud.sweep_index, pose, points_in=len(cloud), points_kept=len(kept),
            cycle_ms=1e3 * (time.perf_counter() - t0),
        )
        return replace(state, previous=record, trajectory=trajectory, map=new_map,
                       reports=state.reports + (report,)), pose

    prev = state.previous
    info = {}
    coarse: CoarseTransform | None = None
    if prev.grid is not None and record.grid is not None:
        coarse = estimate_coarse(prev.grid, record.grid, config.poc, config.frame_convention)
        info.update(coarse_confidence=coarse.confidence, coarse_theta=coarse.theta)
    if coarse is None or coarse.low_confidence:
        init = RigidTransform()
        info["coarse_fallback"] = True
    else:
        # the coarse estimate lives in the rectified frames of both sweeps
        init = prev.rectification.inverse() @ coarse.transform @ rect

    relative = init
    try:
        result = point_to_plane_icp(record.normals, prev.normals, init, config.icp)
        relative = result.transform
        info.update(icp_rmse=result.final_rmse, icp_iterations=result.iterations_used)
    except (SingularSystem, NoCorrespondences) as exc:
        info["icp_fallback"] = True
        info["error"] = type(exc).__name__
        if info.get("coarse_fallback"):
            relative = state.last_relative
            info["extrapolated"] = True

    pose, count = _chain(state, relative)
    trajectory = state.trajectory.append(cloud.sweep_index, pose)
    new_map = state.map.insert(pose.transform_points(cloud.points))
    report = SweepReport(
        cloud.sweep_index, pose, points_in=len(cloud), points_kept=len(kept),
        cycle_ms=1e3 * (time.perf_counter() - t0), **info,
    )
    if report.degraded:
        log.warning("sweep %d degraded: %s", cloud.sweep_index, info)
    new_state = PipelineState(record, trajectory, new_map, relative, count, state.reports + (report,))
    return new_state, pose


@dataclass(frozen=True, eq=False)
class RunResult:
    trajectory: Trajectory
    map_points: np.ndarray
    reports: tuple
    errors: tuple = ()


def run_sequence(sweeps, config: PipelineConfig = PipelineConfig(), progress=None) -> RunResult:
    """Fold :func:`process_sweep` over every ``frame_skip``-th sweep.

    ``sweeps`` yields point clouds (their ``sweep_index`` is used for
    skipping) or ``(index, cloud)`` pairs.  A sweep that raises is recorded
    and skipped; the run carries on.
    """
    state = PipelineState()
    errors = []
    seen = 0
    for item in sweeps:
        if isinstance(item, tuple):
            index, cloud = item
            if cloud.sweep_index != index:
                cloud = PointCloud(cloud.points, cloud.frame, index)
        else:
            cloud = item
        seen += 1
        if cloud.sweep_index % config.frame_skip:
            continue
        try:
            state, _ = process_sweep(state, cloud, config)
        except (OdometryError, ValueError) as exc:
            log.error("sweep %d failed: %s", cloud.sweep_index, exc)
            errors.append((cloud.sweep_index, f"{type(exc).__name__}: {exc}"))
            continue
        if progress is not None:
            progress(state.reports[-1])
    if seen == 0:
        raise ValueError("no sweeps given")
    return RunResult(state.trajectory, state.map.points, state.reports, tuple(errors))


def write_report(path, result: RunResult, config: PipelineConfig | None = None, notes=()):
    """Comma-separated per-sweep report.

    The effective config, per-sweep errors and any extra ``notes`` are
    written first as ``#`` lines.
    """
    with open(path, "w", newline="") as fh:
        if config is not None:
            for key, value in config.as_dict().items():
                fh.write(f"# {key} = {value}\n")
        for note in notes:
            fh.write(f"# {note}\n")
        for index, message in result.errors:
            fh.write(f"# error sweep {index}: {message}\n")
        writer = csv.writer(fh)
        writer.writerow(SweepReport.COLUMNS)
        for rep in result.reports:
            writer.writerow(rep.row())


def read_report_cycle_ms(path):
    with open(path) as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        return [float(r["cycle_ms"]) for r in rows]
