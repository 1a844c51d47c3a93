"""Point-to-plane ICP with k-NN surface normals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoCorrespondences, SingularSystem
from .geometry import PointCloud, RigidTransform, compose, exp_so3, rotation_angle, voxel_downsample_index

MIN_CORRESPONDENCES = 10
MAX_CONDITION = 1e12
# neighbourhoods whose middle eigenvalue is this small relative to the largest
# are treated as collinear: their smallest eigenvector is not a surface normal
COLLINEAR_RATIO = 1e-6


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 30
    max_correspondence_distance: float = 1.0
    convergence_translation_eps: float = 1e-4
    convergence_rotation_eps: float = 1e-4
    normal_neighbors: int = 20
    normal_radius: float = 1.0
    downsample_voxel: float = 0.2
    max_halvings: int = 4
    residual_sigmas: float = 3.0
    min_residual_bound: float = 0.05
    max_normal_angle_deg: float = 30.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.normal_neighbors < 3:
            raise ValueError("invalid ICP parameters")
        if self.max_correspondence_distance <= 0:
            raise ValueError("max_correspondence_distance must be positive")


@dataclass(frozen=True, eq=False)
class NormalCloud:
    base: PointCloud
    normals: np.ndarray
    degenerate: np.ndarray
    _tree: list = field(default_factory=list, repr=False)

    @property
    def points(self):
        return self.base.points

    def valid(self):
        """Points, normals and a k-d tree over the non-degenerate points (cached)."""
        if not self._tree:
            keep = ~self.degenerate
            pts = self.points[keep]
            self._tree.append((pts, self.normals[keep], cKDTree(pts)))
        return self._tree[0]


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    iterations_used: int
    final_rmse: float
    correspondence_count: int
    converged: bool
    objective_history: tuple = ()

    def decomposition(self):
        """``(alpha, beta, gamma), (tx, ty, tz)`` with ``T = t . Rz Ry Rx``."""
        return self.transform.euler(), tuple(self.transform.translation)


def estimate_normals(
    cloud, k: int = 20, viewpoint=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0), radius: float = np.inf
) -> NormalCloud:
    """PCA normals from the ``k`` nearest neighbours, turned to face ``viewpoint``.

    Neighbours further than ``radius`` are ignored, so a sparse scan line far
    from the sensor does not borrow points from a wall metres away.
    Neighbourhoods with fewer than three points, zero spread, or collinear
    ones get ``up`` as normal and are flagged as degenerate.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    pts = cloud.points
    if len(pts) < k + 1:
        raise ValueError(f"need at least {k + 1} points for {k}-NN normals")
    dist, idx = cKDTree(pts).query(pts, k=k + 1, distance_upper_bound=radius)
    have = np.isfinite(dist)
    # missing neighbours come back as index len(pts); they get zero weight
    nb = np.vstack([pts, np.zeros((1, 3))])[idx]
    count = have.sum(axis=1)
    weight = have[:, :, None].astype(np.float64)
    mean = (nb * weight).sum(axis=1) / count[:, None]
    centered = (nb - mean[:, None, :]) * weight
    cov = (centered.transpose(0, 2, 1) @ centered) / count[:, None, None]
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    degenerate = (count < 3) | (w[:, 2] <= 1e-12) | (w[:, 1] <= COLLINEAR_RATIO * w[:, 2])
    normals[degenerate] = np.asarray(up, dtype=np.float64)
    to_view = np.asarray(viewpoint, dtype=np.float64) - pts
    flip = np.einsum("ij,ij->i", normals, to_view) < 0
    normals[flip & ~degenerate] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return NormalCloud(cloud, normals, degenerate)


def point_to_plane_system(src, dst, normals):
    """Jacobian and residuals of ``((s - d) . n)`` w.r.t. ``(omega, v)``.

    The increment is ``s -> exp(omega) s + v``; at zero ``d r / d omega =
    s x n`` and ``d r / d v = n``.
    """
    r = np.einsum("ij,ij->i", src - dst, normals)
    J = np.hstack([np.cross(src, normals), normals])
    return J, r


def point_to_plane_objective(src, dst, normals):
    r = np.einsum("ij,ij->i", src - dst, normals)
    return float(r @ r)


def increment_transform(xi):
    xi = np.asarray(xi, dtype=np.float64)
    return RigidTransform(exp_so3(xi[:3]), xi[3:])


def point_to_plane_icp(
    source,
    target: NormalCloud,
    init: RigidTransform = RigidTransform(),
    params: IcpParams = IcpParams(),
) -> IcpResult:
    """Transform ``T`` (init folded in) minimising ``sum ((T s - d) . n)^2``.

    Correspondences are re-established every iteration by nearest-neighbour
    search within ``max_correspondence_distance``.  A Gauss-Newton step that
    raises the objective is halved up to ``max_halvings`` times; if it still
    does not help, the stage stops.

    After the plain stage converges, a second stage drops pairs whose
    point-to-plane residual exceeds ``residual_sigmas`` robust standard
    deviations (at least ``min_residual_bound``).  These are mostly points
    near plane junctions matched to the wrong surface.  ``residual_sigmas =
    0`` skips the second stage.  ``max_iterations`` bounds both stages together.

    When ``source`` is a :class:`NormalCloud`, pairs whose rotated source
    normal is more than ``max_normal_angle_deg`` away from the target normal
    are dropped as well, so a point near the foot of a wall is not pulled
    onto the ground next to it.
    """
    src_n = None
    if isinstance(source, NormalCloud):
        src, src_n = source.points, np.where(source.degenerate[:, None], np.nan, source.normals)
    elif isinstance(source, PointCloud):
        src = source.points
    else:
        src = np.asarray(source, dtype=np.float64)
    if params.downsample_voxel > 0:
        keep = voxel_downsample_index(src, params.downsample_voxel)
        src = src[keep]
        src_n = None if src_n is None else src_n[keep]
    check_normals = src_n is not None and params.max_normal_angle_deg < 180.0
    min_cos = np.cos(np.radians(params.max_normal_angle_deg))
    tgt, tgt_n, tree = target.valid()
    if len(src) == 0 or len(tgt) == 0:
        raise NoCorrespondences("empty source or target")

    def correspond(T, trim):
        s = T.transform_points(src)
        dist, idx = tree.query(s, distance_upper_bound=params.max_correspondence_distance)
        ok = np.isfinite(dist)
        if ok.sum() < MIN_CORRESPONDENCES:
            raise NoCorrespondences(f"only {int(ok.sum())} correspondences")
        s, d, n = s[ok], tgt[idx[ok]], tgt_n[idx[ok]]
        if check_normals:
            # NaN (degenerate source normal) compares False and keeps the pair
            turned = src_n[ok] @ T.rotation.T
            bad = np.einsum("ij,ij->i", turned, n) < min_cos
            if (~bad).sum() >= MIN_CORRESPONDENCES:
                s, d, n = s[~bad], d[~bad], n[~bad]
        if trim:
            r = np.abs(np.einsum("ij,ij->i", s - d, n))
            bound = max(params.residual_sigmas * 1.4826 * np.median(r), params.min_residual_bound)
            keep = r <= bound
            if keep.sum() >= MIN_CORRESPONDENCES:
                s, d, n = s[keep], d[keep], n[keep]
        return s, d, n

    T = init
    pairs = correspond(T, False)
    objective = point_to_plane_objective(*pairs)
    history = [objective]
    converged = False
    it = 0
    stages = (False, True) if params.residual_sigmas > 0 else (False,)
    for trim in stages:
        if trim:
            pairs = correspond(T, True)
            objective = point_to_plane_objective(*pairs)
            history.append(objective)
        converged = False
        while it < params.max_iterations:
            it += 1
            J, r = point_to_plane_system(*pairs)
            H = J.T @ J
            eig = np.linalg.eigvalsh(H)
            if eig[0] <= 0 or eig[-1] / eig[0] > MAX_CONDITION:
                raise SingularSystem("point-to-plane system is rank deficient")
            xi = np.linalg.solve(H, -(J.T @ r))

            accepted = None
            step = 1.0
            for _ in range(params.max_halvings + 1):
                inc = increment_transform(step * xi)
                T_try = compose(inc, T)
                pairs_try = correspond(T_try, trim)
                obj_try = point_to_plane_objective(*pairs_try)
                if obj_try <= objective:
                    accepted = (inc, T_try, pairs_try, obj_try)
                    break
                step *= 0.5
            if accepted is None:
                converged = (
                    np.linalg.norm(xi[3:]) < params.convergence_translation_eps
                    and np.linalg.norm(xi[:3]) < params.convergence_rotation_eps
                )
                break
            inc, T, pairs, objective = accepted
            history.append(objective)
            if (
                np.linalg.norm(inc.translation) < params.convergence_translation_eps
                and rotation_angle(inc.rotation) < params.convergence_rotation_eps
            ):
                converged = True
                break

    count = len(pairs[0])
    return IcpResult(
        transform=T.orthonormalized(),
        iterations_used=it,
        final_rmse=float(np.sqrt(objective / count)),
        correspondence_count=count,
        converged=converged,
        objective_history=tuple(history),
    )
