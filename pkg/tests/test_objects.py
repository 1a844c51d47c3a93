import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import box_surface
from oracles import dbscan_bruteforce
from pocodom.errors import EmptyResult
from pocodom.geometry import LEFT_UP_FORWARD, PointCloud
from pocodom.ground import Plane
from pocodom.objects import (
    ClusterLabeling,
    ClusterParams,
    dbscan,
    filter_small_clusters,
    remove_small_objects,
)

UP_PLANE = Plane(np.array([0.0, 0.0, 1.0]), 1.73)


def blob(center, n, spacing, rng):
    side = int(np.ceil(n ** (1 / 3)))
    g = np.arange(side) * spacing
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])[:n]
    return pts + np.asarray(center)


def test_two_separated_blobs(rng):
    pts = np.vstack([blob([0, 0, 0], 50, 0.1, rng), blob([10, 0, 0], 50, 0.1, rng)])
    lab = dbscan(pts, 0.5, 5)
    assert lab.cluster_count == 2
    assert np.all(lab.labels >= 0)
    assert len(set(lab.labels[:50])) == 1 and len(set(lab.labels[50:])) == 1


def test_isolated_point_is_noise():
    lab = dbscan(np.array([[0.0, 0.0, 0.0]]), 0.5, 2)
    assert lab.labels.tolist() == [-1] and lab.cluster_count == 0


@given(st.integers(0, 10_000))
def test_min_pts_one_leaves_no_noise(seed):
    pts = np.random.default_rng(seed).uniform(-5, 5, size=(60, 3))
    assert np.all(dbscan(pts, 0.5, 1).labels >= 0)


def _clouds():
    return st.tuples(
        st.integers(0, 2**31), st.integers(1, 200), st.floats(0.2, 1.5), st.integers(1, 8)
    )


@given(_clouds())
def test_matches_bruteforce_oracle(args):
    seed, n, eps, min_pts = args
    rng = np.random.default_rng(seed)
    # clumpy clouds so that clusters, borders and noise all occur
    centers = rng.uniform(-4, 4, size=(4, 3))
    pts = centers[rng.integers(0, 4, n)] + rng.normal(0, 0.6, size=(n, 3))
    lab = dbscan(pts, eps, min_pts)
    labels, core, count = dbscan_bruteforce(pts, eps, min_pts)
    assert np.array_equal(lab.core, core)
    assert lab.cluster_count == count
    assert np.array_equal(lab.labels, labels)


@given(st.integers(0, 2**31))
def test_core_and_noise_flags_survive_shuffling(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3, 3, size=(120, 3))
    perm = rng.permutation(len(pts))
    a = dbscan(pts, 0.8, 4)
    b = dbscan(pts[perm], 0.8, 4)
    assert np.array_equal(a.core[perm], b.core)
    assert np.array_equal(a.labels[perm] < 0, b.labels < 0)


def test_labels_are_in_range_and_clusters_have_cores(rng):
    pts = rng.uniform(-3, 3, size=(150, 3))
    lab = dbscan(pts, 0.7, 4)
    assert set(np.unique(lab.labels)) <= set(range(-1, lab.cluster_count))
    for c in range(lab.cluster_count):
        assert lab.core[lab.labels == c].any()


def test_filter_keeps_only_large_clusters():
    small = box_surface([5.0, 5.0, 0.0], [6.0, 6.0, 1.0], 0.2)
    wall = box_surface([0.0, -20.0, 0.0], [20.0, -18.0, 2.0], 0.2)
    cloud = PointCloud(np.vstack([small, wall]))
    lab = dbscan(cloud.points, 0.5, 5)
    out = filter_small_clusters(cloud, lab, ClusterParams())
    assert len(out) == len(wall)
    assert np.array_equal(np.unique(out.points, axis=0), np.unique(wall, axis=0))


def test_extent_exactly_at_threshold_is_kept():
    line = np.column_stack([np.arange(0.0, 10.0 + 1e-9, 0.1), np.zeros(101), np.zeros(101)])
    cloud = PointCloud(line)
    lab = dbscan(line, 0.5, 2)
    assert lab.cluster_count == 1
    assert len(filter_small_clusters(cloud, lab, ClusterParams())) == len(line)
    shorter = PointCloud(line[:-1])
    assert len(filter_small_clusters(shorter, dbscan(shorter.points, 0.5, 2), ClusterParams())) == 0


def test_extents_use_forward_left_up_axes():
    # 12 m along the sensor's up axis only: too tall for the up threshold of 4 m
    pole = np.column_stack([np.zeros(121), np.arange(0, 12.0 + 1e-9, 0.1), np.zeros(121)])
    lab = dbscan(pole, 0.5, 2)
    assert len(filter_small_clusters(PointCloud(pole), lab, ClusterParams(), LEFT_UP_FORWARD)) == 121
    # 12 m along left also exceeds its 10 m threshold
    left_pole = pole[:, [1, 0, 2]]
    lab = dbscan(left_pole, 0.5, 2)
    assert len(filter_small_clusters(PointCloud(left_pole), lab, ClusterParams(), LEFT_UP_FORWARD)) == 121


def test_filter_empty_cloud():
    empty = PointCloud(np.zeros((0, 3)))
    lab = ClusterLabeling(np.zeros(0, dtype=int), 0, np.zeros(0, dtype=bool))
    assert len(filter_small_clusters(empty, lab, ClusterParams())) == 0


def _street():
    # car floors sit 0.3 m above the ground so they are not taken for ground
    g = np.arange(-20.0, 20.0 + 1e-9, 0.25)
    X, Y = np.meshgrid(g, g)
    ground = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, -1.73)])
    car1 = box_surface([3.0, 4.0, -1.43], [7.0, 6.0, -0.23], 0.2)
    car2 = box_surface([-8.0, -6.0, -1.43], [-4.0, -4.0, -0.23], 0.2)
    wall = box_surface([-15.0, 10.0, -1.53], [15.0, 11.0, 6.27], 0.25)
    return ground, car1, car2, wall


def test_street_scene_removes_cars_keeps_wall_and_ground():
    ground, car1, car2, wall = _street()
    cloud = PointCloud(np.vstack([ground, car1, car2, wall]))
    out = remove_small_objects(cloud, UP_PLANE, ClusterParams())
    expected = np.vstack([wall, ground])
    assert len(out) == len(expected)
    assert np.array_equal(np.unique(out.points, axis=0), np.unique(expected, axis=0))


def test_pure_ground_is_unchanged():
    ground = _street()[0]
    out = remove_small_objects(PointCloud(ground), UP_PLANE)
    assert np.array_equal(np.sort(out.points, axis=0), np.sort(ground, axis=0))


def test_removal_is_idempotent():
    ground, car1, car2, wall = _street()
    cloud = PointCloud(np.vstack([ground, car1, wall, car2]))
    once = remove_small_objects(cloud, UP_PLANE)
    twice = remove_small_objects(once, UP_PLANE)
    assert np.array_equal(np.unique(once.points, axis=0), np.unique(twice.points, axis=0))


def test_output_never_grows(rng):
    pts = rng.uniform(-10, 10, size=(500, 3))
    assert len(remove_small_objects(PointCloud(np.vstack([pts, _street()[0]])), UP_PLANE)) <= 500 + len(_street()[0])


def test_everything_small_and_no_ground_is_empty_result():
    car = box_surface([3.0, 4.0, 0.0], [7.0, 6.0, 1.3], 0.2)
    with pytest.raises(EmptyResult):
        remove_small_objects(PointCloud(car), UP_PLANE)
