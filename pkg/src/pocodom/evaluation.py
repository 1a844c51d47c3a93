"""Relative-pose drift in percent per 100 m, and cycle-time statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooShort
from .geometry import RigidTransform, rotation_angle

DEFAULT_SEGMENTS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
LOST_TRACKING_PERCENT = 50.0


@dataclass(frozen=True)
class Segment:
    start_index: int
    end_index: int
    length: float
    translation_percent: float
    rotation_deg_per_100m: float


@dataclass(frozen=True)
class DriftReport:
    percent_error_per_100m: float
    rotation_deg_per_100m: float
    segments: tuple
    mean_cycle_ms: float = float("nan")
    p95_cycle_ms: float = float("nan")
    degraded_sweep_count: int = 0
    lost_tracking: bool = False

    def rows(self):
        yield ("start_index", "end_index", "length_m", "translation_percent", "rotation_deg_per_100m")
        for s in self.segments:
            yield (
                s.start_index, s.end_index, f"{s.length:.6g}",
                f"{s.translation_percent:.9g}", f"{s.rotation_deg_per_100m:.9g}",
            )

    def summary(self):
        return "\n".join([
            f"segments: {len(self.segments)}",
            f"translation error: {self.percent_error_per_100m:.4f} %/100m",
            f"rotation error: {self.rotation_deg_per_100m:.5f} deg/100m",
            f"mean cycle: {self.mean_cycle_ms:.1f} ms (p95 {self.p95_cycle_ms:.1f} ms)",
            f"degraded sweeps: {self.degraded_sweep_count}",
            f"lost tracking: {'yes' if self.lost_tracking else 'no'}",
        ])


def _relative(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.inverse() @ b


def arc_lengths(poses):
    """Cumulative travelled distance along a list of poses, starting at 0."""
    pos = np.array([p.translation for p in poses]).reshape(-1, 3)
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def evaluate(
    traj,
    truth,
    segment_lengths=DEFAULT_SEGMENTS,
    cycle_ms=None,
    degraded_sweep_count: int = 0,
) -> DriftReport:
    """Score ``traj`` against ``truth`` (a list indexed by sweep index).

    For every estimated pose as start and every length ``L``, the end is the
    first later estimated pose at least ``L`` metres further along the truth
    path.  The segment error is the distance between estimated and true
    relative translations, in percent of ``L``.  Distances follow the full
    truth path, so runs with skipped sweeps are measured on the same arc.
    """
    if hasattr(traj, "indices"):
        indices, poses = list(traj.indices), list(traj.poses)
    else:
        poses = list(traj)
        indices = list(range(len(poses)))
    if len(poses) < 2:
        raise ValueError("need at least two estimated poses")
    if max(indices) >= len(truth):
        raise ValueError(f"truth has {len(truth)} poses, estimate reaches index {max(indices)}")
    lengths = sorted(float(L) for L in segment_lengths)
    if not lengths or lengths[0] <= 0:
        raise ValueError("segment lengths must be positive")

    dist_all = arc_lengths(truth[: max(indices) + 1])
    dist = dist_all[indices]
    if dist[-1] - dist[0] < lengths[0]:
        raise TooShort(f"path length {dist[-1] - dist[0]:.2f} m is below {lengths[0]:.0f} m")

    segments = []
    for i, start in enumerate(indices):
        for L in lengths:
            j = int(np.searchsorted(dist, dist[i] + L, side="left"))
            if j >= len(indices):
                break
            est = _relative(poses[i], poses[j])
            ref = _relative(truth[start], truth[indices[j]])
            t_err = np.linalg.norm(est.translation - ref.translation) / L * 100.0
            r_err = np.degrees(rotation_angle(ref.rotation.T @ est.rotation)) / L * 100.0
            segments.append(Segment(start, indices[j], L, float(t_err), float(r_err)))
    if not segments:
        raise TooShort("no complete segment fits the trajectory")

    t = np.array([s.translation_percent for s in segments])
    r = np.array([s.rotation_deg_per_100m for s in segments])
    mean_ms = p95_ms = float("nan")
    if cycle_ms is not None and len(cycle_ms):
        mean_ms, p95_ms = timing_summary(cycle_ms)
    return DriftReport(
        percent_error_per_100m=float(t.mean()),
        rotation_deg_per_100m=float(r.mean()),
        segments=tuple(segments),
        mean_cycle_ms=mean_ms,
        p95_cycle_ms=p95_ms,
        degraded_sweep_count=int(degraded_sweep_count),
        lost_tracking=bool(np.any(t > LOST_TRACKING_PERCENT)),
    )


def timing_summary(cycle_ms):
    """``(mean, 95th percentile)`` of per-sweep wall-clock times in ms.

    The percentile interpolates linearly between order statistics.
    """
    ms = np.asarray([getattr(r, "cycle_ms", r) for r in cycle_ms], dtype=np.float64)
    if ms.size == 0:
        raise ValueError("no timing rows")
    return float(ms.mean()), float(np.percentile(ms, 95))
