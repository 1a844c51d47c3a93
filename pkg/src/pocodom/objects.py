"""Small object removal: DBSCAN on the non-ground points plus a size filter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyResult
from .geometry import KITTI, FrameConvention, PointCloud, concat
from .ground import Plane, split_ground

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    eps: float = 0.5
    min_pts: int = 10
    # (forward, left, up) extents, i.e. the z, x, y axes of a left-up-forward sensor frame
    max_extent: tuple = (10.0, 10.0, 4.0)

    def __post_init__(self):
        if self.eps <= 0 or self.min_pts < 1 or min(self.max_extent) <= 0:
            raise ValueError("invalid cluster parameters")


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray
    cluster_count: int
    core: np.ndarray

    def __len__(self):
        return len(self.labels)


def dbscan(points, eps: float, min_pts: int) -> ClusterLabeling:
    """Density clustering with deterministic border assignment.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``.  Clusters are the connected components of the core
    points, numbered in order of their lowest core index, which is the
    order a sequential scan over ascending indices creates them.  A border
    point joins the lowest-numbered cluster owning a core point within
    ``eps``, the cluster that reaches it first in that scan.
    """
    if isinstance(points, PointCloud):
        points = points.points
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterLabeling(labels, 0, np.zeros(0, dtype=bool))

    tree = cKDTree(pts)
    counts = tree.query_ball_point(pts, eps, return_length=True)
    core = counts >= min_pts
    core_idx = np.flatnonzero(core)
    if len(core_idx) == 0:
        return ClusterLabeling(labels, 0, core)

    core_tree = cKDTree(pts[core_idx])
    pairs = core_tree.query_pairs(eps, output_type="ndarray")
    m = len(core_idx)
    graph = coo_matrix((np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    n_comp, comp = connected_components(graph, directed=False)

    # renumber components by their lowest core index (core_idx is ascending)
    first = np.full(n_comp, m, dtype=np.int64)
    np.minimum.at(first, comp, np.arange(m))
    order = np.argsort(first, kind="stable")
    rank = np.empty(n_comp, dtype=np.int64)
    rank[order] = np.arange(n_comp)
    labels[core_idx] = rank[comp]

    border_idx = np.flatnonzero(~core)
    if len(border_idx):
        dist = core_tree.sparse_distance_matrix(cKDTree(pts[border_idx]), eps, output_type="coo_matrix")
        if dist.nnz:
            best = np.full(len(border_idx), n_comp, dtype=np.int64)
            np.minimum.at(best, dist.col, rank[comp[dist.row]])
            hit = best < n_comp
            labels[border_idx[hit]] = best[hit]
    return ClusterLabeling(labels, int(n_comp), core)


def cluster_extents(points, labeling: ClusterLabeling, conv: FrameConvention = KITTI):
    """Axis-aligned ``(forward, left, up)`` bounding box size of each cluster."""
    c = conv.to_canonical(points)
    k = labeling.cluster_count
    lo = np.full((k, 3), np.inf)
    hi = np.full((k, 3), -np.inf)
    m = labeling.labels >= 0
    np.minimum.at(lo, labeling.labels[m], c[m])
    np.maximum.at(hi, labeling.labels[m], c[m])
    return hi - lo


def small_cluster_mask(points, labeling: ClusterLabeling, params: ClusterParams, conv=KITTI):
    """True for points to drop: noise and clusters strictly inside ``max_extent``."""
    drop = labeling.labels < 0
    if labeling.cluster_count:
        ext = cluster_extents(points, labeling, conv)
        small = np.all(ext < np.asarray(params.max_extent), axis=1)
        drop |= (labeling.labels >= 0) & small[np.maximum(labeling.labels, 0)]
    return drop


def filter_small_clusters(
    cloud: PointCloud, labeling: ClusterLabeling, params: ClusterParams, conv: FrameConvention = KITTI
) -> PointCloud:
    if len(labeling) != len(cloud):
        raise ValueError("labeling does not match the cloud")
    if len(cloud) == 0:
        return cloud
    return cloud.select(~small_cluster_mask(cloud.points, labeling, params, conv))


def separate_small_objects(
    cloud: PointCloud,
    plane: Plane,
    params: ClusterParams = ClusterParams(),
    ground_threshold: float = 0.2,
    conv: FrameConvention = KITTI,
):
    """Return ``(ground, kept_non_ground)`` after small object removal."""
    ground, non_ground = split_ground(cloud, plane, ground_threshold)
    if len(non_ground):
        labeling = dbscan(non_ground.points, params.eps, params.min_pts)
        non_ground = filter_small_clusters(non_ground, labeling, params, conv)
    return ground, non_ground


def remove_small_objects(
    cloud: PointCloud,
    plane: Plane,
    params: ClusterParams = ClusterParams(),
    ground_threshold: float = 0.2,
    conv: FrameConvention = KITTI,
) -> PointCloud:
    """Drop small clusters and noise from the non-ground part, keep the ground."""
    ground, kept = separate_small_objects(cloud, plane, params, ground_threshold, conv)
    out = concat(kept, ground)
    if len(out) == 0:
        raise EmptyResult("nothing left after small object removal")
    return out
