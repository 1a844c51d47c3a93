import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_transform
from pocodom.dataset_io import (
    SweepSource,
    read_kitti_poses,
    read_kitti_scan,
    read_kitti_scan_counted,
    read_map,
    read_trajectory,
    read_tum_poses,
    trajectory_format,
    write_kitti_scan,
    write_map,
    write_sequence,
    write_trajectory,
)
from pocodom.errors import MalformedFile, MalformedPose
from pocodom.geometry import RigidTransform, rot_z
from pocodom.pipeline import Trajectory


def minimal_pcd_reader(path):
    """Independent reader: skip to the DATA line, then read triples."""
    with open(path) as fh:
        for line in fh:
            if line.startswith("POINTS"):
                expected = int(line.split()[1])
            if line.startswith("DATA"):
                break
        pts = [tuple(map(float, ln.split())) for ln in fh if ln.strip()]
    assert len(pts) == expected
    return np.array(pts)


def test_scan_single_record(tmp_path):
    path = tmp_path / "one.bin"
    path.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    cloud = read_kitti_scan(path)
    assert cloud.points.tolist() == [[1.0, 2.0, 3.0]]


def test_scan_empty_file(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    assert len(read_kitti_scan(path)) == 0


def test_scan_truncated_is_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes(17))
    with pytest.raises(MalformedFile):
        read_kitti_scan(path)


def test_scan_missing_file(tmp_path):
    with pytest.raises(MalformedFile):
        read_kitti_scan(tmp_path / "nope.bin")


def test_scan_drops_non_finite_and_counts(tmp_path):
    path = tmp_path / "nan.bin"
    path.write_bytes(struct.pack("<12f", 1, 2, 3, 0, np.nan, 0, 0, 0, 4, 5, np.inf, 0))
    cloud, dropped = read_kitti_scan_counted(path)
    assert dropped == 2
    assert cloud.points.tolist() == [[1.0, 2.0, 3.0]]


def test_scan_copy_is_exact(tmp_path, rng):
    pts = rng.normal(size=(300, 3)).astype(np.float32).astype(np.float64)
    write_kitti_scan(tmp_path / "a.bin", pts, reflectance=rng.uniform(size=300))
    assert np.array_equal(read_kitti_scan(tmp_path / "a.bin").points, pts)


def test_identity_pose_line(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
    (pose,) = read_kitti_poses(path)
    assert np.array_equal(pose.matrix, np.eye(4))


def test_eleven_fields_rejected(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(MalformedPose):
        read_kitti_poses(path)


def test_non_numeric_pose_rejected(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 x\n")
    with pytest.raises(MalformedPose):
        read_kitti_poses(path)


def test_slightly_off_rotation_is_snapped(tmp_path):
    R = rot_z(0.3) + 1e-4
    path = tmp_path / "poses.txt"
    path.write_text(" ".join(map(str, np.hstack([R, [[1], [2], [3]]]).ravel())) + "\n")
    (pose,) = read_kitti_poses(path)
    assert np.allclose(pose.rotation @ pose.rotation.T, np.eye(3), atol=1e-12)
    assert np.allclose(pose.rotation, rot_z(0.3), atol=1e-3)


def test_far_from_rotation_rejected(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("2 0 0 0 0 1 0 0 0 0 1 0\n")
    with pytest.raises(MalformedPose):
        read_kitti_poses(path)


def test_identity_written_as_kitti(tmp_path):
    path = tmp_path / "t.txt"
    write_trajectory([RigidTransform()], path)
    assert path.read_text() == "1 0 0 0 0 1 0 0 0 0 1 0\n"


def test_identity_written_as_tum(tmp_path):
    path = tmp_path / "t.txt"
    write_trajectory(Trajectory((7,), (RigidTransform(),)), path, "tum-8")
    assert path.read_text() == "7 0 0 0 0 0 0 1\n"


def test_unknown_trajectory_format(tmp_path):
    with pytest.raises(ValueError):
        write_trajectory([RigidTransform()], tmp_path / "t.txt", "csv")


@given(st.integers(0, 2**32 - 1))
def test_kitti_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    poses = [random_transform(rng, max_t=500.0) for _ in range(20)]
    path = tmp_path_factory.mktemp("rt") / "poses.txt"
    write_trajectory(poses, path)
    back = read_kitti_poses(path)
    assert len(back) == len(poses)
    for a, b in zip(poses, back):
        assert np.max(np.abs(a.matrix - b.matrix)) < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_tum_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    poses = tuple(random_transform(rng, max_t=500.0) for _ in range(10))
    indices = tuple(range(0, 30, 3))
    path = tmp_path_factory.mktemp("rt") / "traj.txt"
    write_trajectory(Trajectory(indices, poses), path, "tum-8")
    assert trajectory_format(path) == "tum-8"
    got_idx, back = read_tum_poses(path)
    assert tuple(got_idx) == indices
    for a, b in zip(poses, back):
        assert np.max(np.abs(a.matrix - b.matrix)) < 1e-9


def test_read_trajectory_numbers_kitti_rows(tmp_path):
    path = tmp_path / "t.txt"
    write_trajectory([RigidTransform()] * 3, path)
    indices, poses = read_trajectory(path)
    assert indices == [0, 1, 2] and len(poses) == 3


def test_one_point_pcd(tmp_path):
    path = tmp_path / "m.pcd"
    write_map([[1.5, -2.0, 3.25]], path)
    lines = path.read_text().splitlines()
    assert "POINTS 1" in lines
    assert lines[-1] == "1.5 -2 3.25"
    for key in ("VERSION", "FIELDS x y z", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "DATA ascii"):
        assert any(ln.startswith(key) for ln in lines)


def test_empty_map_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_map(np.zeros((0, 3)), tmp_path / "m.pcd")


@pytest.mark.parametrize("fmt", ["pcd-ascii", "xyz"])
def test_map_round_trip(tmp_path, rng, fmt):
    pts = rng.normal(scale=100.0, size=(500, 3))
    path = tmp_path / "m.txt"
    write_map(pts, path, fmt)
    assert np.array_equal(read_map(path), pts)
    if fmt == "pcd-ascii":
        assert np.array_equal(minimal_pcd_reader(path), pts)
    else:
        assert np.array_equal(np.loadtxt(path), pts)


def test_sweep_source_layout(tmp_path, rng):
    clouds = [rng.normal(size=(50, 3)).astype(np.float32).astype(np.float64) for _ in range(3)]
    poses = [RigidTransform(rot_z(0.1 * k), [k, 0, 0]) for k in range(3)]
    write_sequence(tmp_path, clouds, poses)
    src = SweepSource.open(tmp_path)
    assert len(src) == 3
    got = list(src)
    assert [c.sweep_index for c in got] == [0, 1, 2]
    assert all(np.array_equal(c.points, p) for c, p in zip(got, clouds))
    assert all(np.allclose(a.matrix, b.matrix, atol=1e-12) for a, b in zip(src.sensor_truth(), poses))


def test_sweep_source_orders_numerically(tmp_path):
    for name in ("10", "9", "000011"):
        write_kitti_scan(tmp_path / f"{name}.bin", [[0.0, 0.0, 0.0]])
    src = SweepSource.open(tmp_path)
    assert [src.index_of(i) for i in range(3)] == [9, 10, 11]


def test_sweep_source_calibration_conjugates(tmp_path):
    write_sequence(tmp_path, [np.zeros((1, 3))] * 2, [RigidTransform(), RigidTransform(rot_z(0.2), [1, 0, 0])])
    C = RigidTransform(rot_z(np.pi / 2), [0.5, 0, 0])
    src = SweepSource.open(tmp_path, calibration=C)
    truth = src.sensor_truth()
    assert np.allclose(truth[1].matrix, (C.inverse() @ src.truth[1] @ C).matrix)


def test_sweep_source_short_truth(tmp_path):
    write_sequence(tmp_path, [np.zeros((1, 3))] * 3, [RigidTransform()] * 2)
    with pytest.raises(MalformedPose):
        SweepSource.open(tmp_path)


def test_sweep_source_errors(tmp_path):
    with pytest.raises(MalformedFile):
        SweepSource.open(tmp_path / "missing")
    with pytest.raises(MalformedFile):
        SweepSource.open(tmp_path)
    write_kitti_scan(tmp_path / "scan_a.bin", [[0.0, 0.0, 0.0]])
    with pytest.raises(MalformedFile):
        SweepSource.open(tmp_path)
