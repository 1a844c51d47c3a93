"""Ground plane estimation, ground/non-ground split and rectification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormal, DegenerateSample, InsufficientCandidates
from .geometry import KITTI, FrameConvention, PointCloud, RigidTransform, apply, rotation_about


@dataclass(frozen=True)
class Plane:
    """``{p : normal . p + offset = 0}`` with the normal pointing up."""

    normal: np.ndarray
    offset: float
    inlier_count: int = 0
    mean_inlier_distance: float = 0.0

    def distance(self, pts):
        """Signed distance, positive above the ground."""
        return np.asarray(pts) @ self.normal + self.offset


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 100
    sample_size: int = 3
    distance_threshold: float = 0.2
    candidate_height_band: float = 0.5
    sensor_height: float = 1.73
    refit_rounds: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.sample_size < 3:
            raise ValueError("sample_size must be >= 3")
        if self.distance_threshold <= 0:
            raise ValueError("distance_threshold must be positive")


def _orient(normal, offset, up):
    if normal @ up < 0:
        return -normal, -offset
    return normal, offset


def fit_plane_lsq(pts):
    """Total least squares plane: smallest eigenvector of the covariance."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, vecs = np.linalg.eigh(centered.T @ centered)
    normal = vecs[:, 0]
    return normal, -float(normal @ centroid)


def _sample_plane(pts):
    # None for collinear / coincident samples
    if len(pts) == 3:
        n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        length = np.linalg.norm(n)
        if length < 1e-9:
            return None
        normal = n / length
        return normal, -float(normal @ pts[0])
    spread = np.linalg.eigvalsh(np.cov(pts.T))
    if spread[1] < 1e-12:
        return None
    return fit_plane_lsq(pts)


def candidate_mask(points, params: RansacParams, conv: FrameConvention = KITTI):
    height = points @ conv.up_vector
    return np.abs(height + params.sensor_height) <= params.candidate_height_band


def estimate_ground(
    cloud: PointCloud,
    params: RansacParams = RansacParams(),
    conv: FrameConvention = KITTI,
    seed: int = 0,
) -> Plane:
    """RANSAC over the points in the ground height band, then a TLS refit.

    Iteration ``i`` draws its sample from ``default_rng([seed, i])`` so the
    result does not depend on evaluation order.  The winner maximises the
    inlier count (ties: smaller mean inlier distance); its inliers over the
    whole cloud are refit until the inlier set stops changing.
    """
    pts = cloud.points
    up = conv.up_vector
    cand = pts[candidate_mask(pts, params, conv)]
    if len(cand) < params.sample_size:
        raise InsufficientCandidates(
            f"{len(cand)} points in the ground band, need {params.sample_size}"
        )

    thr = params.distance_threshold
    best = None
    best_key = None
    for i in range(params.iterations):
        rng = np.random.default_rng([seed, i])
        idx = rng.choice(len(cand), size=params.sample_size, replace=False)
        model = _sample_plane(cand[idx])
        if model is None:
            continue
        normal, offset = model
        d = np.abs(cand @ normal + offset)
        inl = d <= thr
        count = int(inl.sum())
        key = (count, -float(d[inl].mean()) if count else 0.0)
        if best_key is None or key > best_key:
            best_key, best = key, (normal, offset)
    if best is None:
        raise DegenerateSample("every RANSAC sample was degenerate")

    normal, offset = _orient(*best, up)
    inl = np.abs(pts @ normal + offset) <= thr
    for _ in range(params.refit_rounds):
        if inl.sum() < 3:
            break
        normal, offset = _orient(*fit_plane_lsq(pts[inl]), up)
        new_inl = np.abs(pts @ normal + offset) <= thr
        if np.array_equal(new_inl, inl):
            break
        inl = new_inl
    d = np.abs(pts[inl] @ normal + offset)
    return Plane(normal, offset, int(inl.sum()), float(d.mean()) if len(d) else 0.0)


def split_ground(cloud: PointCloud, plane: Plane, threshold: float = 0.2):
    """Return ``(ground, non_ground)``; ground is within ``threshold`` of the plane."""
    mask = np.abs(plane.distance(cloud.points)) <= threshold
    return cloud.select(mask), cloud.select(~mask)


def shortest_arc(a, b):
    """Rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = float(np.clip(a @ b, -1.0, 1.0))
    angle = np.arccos(c)
    if angle < 1e-9:
        return np.eye(3)
    axis = np.cross(a, b)
    return rotation_about(axis, angle)


def rectification(plane: Plane, conv: FrameConvention = KITTI) -> RigidTransform:
    up = conv.up_vector
    if plane.normal @ up <= -1.0 + 1e-9:
        raise DegenerateNormal("ground normal is anti-parallel to the up axis")
    return RigidTransform(shortest_arc(plane.normal, up))


def rectify(cloud: PointCloud, plane: Plane, conv: FrameConvention = KITTI):
    """Rotate ``cloud`` so the ground normal coincides with the up axis."""
    rect = rectification(plane, conv)
    return apply(rect, cloud), rect
