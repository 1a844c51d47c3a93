import csv

import numpy as np
import pytest

from pocodom.cli import DATA_ROOT_ENV, EXIT_DATA, EXIT_LOST, EXIT_OK, EXIT_USAGE, main
from pocodom.dataset_io import read_kitti_poses, read_map, read_trajectory, write_trajectory
from pocodom.geometry import RigidTransform, relative_angle


@pytest.fixture(scope="module")
def seq(tmp_path_factory):
    out = tmp_path_factory.mktemp("seq")
    code = main(["-q", "synth", "--world", "corridor", "--sweeps", "8", "--speed", "0.5",
                 "--pattern", "hdl64", "--out", str(out)])
    assert code == EXIT_OK
    return out


@pytest.fixture(scope="module")
def ran(seq, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["-q", "run", "--data", str(seq), "--out-traj", str(out / "traj.txt"),
                 "--out-map", str(out / "map.pcd"), "--report", str(out / "report.csv")])
    assert code == EXIT_OK
    return out


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["fly"]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_synth_layout(seq):
    assert len(list((seq / "velodyne").glob("*.bin"))) == 8
    assert len(read_kitti_poses(seq / "poses.txt")) == 8


def test_run_outputs(seq, ran):
    truth = read_kitti_poses(seq / "poses.txt")
    indices, poses = read_trajectory(ran / "traj.txt")
    assert indices == list(range(8))
    first = truth[0].inverse()
    for est, gt in zip(poses, truth):
        gt = first @ gt
        assert np.linalg.norm(est.translation - gt.translation) < 0.05
        assert np.degrees(relative_angle(est, gt)) < 0.2
    assert len(read_map(ran / "map.pcd")) > 1000
    text = (ran / "report.csv").read_text()
    assert text.startswith("# ") and "# icp.max_iterations = 30" in text


def test_eval_after_run(seq, ran, capsys):
    out = ran / "segments.csv"
    code = main(["eval", "--traj", str(ran / "traj.txt"), "--truth", str(seq / "poses.txt"),
                 "--segments", "1,2", "--run-report", str(ran / "report.csv"), "--out", str(out)])
    assert code == EXIT_OK
    assert "lost tracking: no" in capsys.readouterr().out
    rows = list(csv.reader(out.open()))
    assert rows[0][0] == "start_index" and len(rows) > 1
    assert max(float(r[3]) for r in rows[1:]) < 10.0


def test_run_empty_directory(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    code = main(["run", "--data", str(empty), "--out-traj", str(tmp_path / "t.txt")])
    assert code == EXIT_DATA
    assert str(empty) in capsys.readouterr().err


def test_data_root_environment(seq, tmp_path, monkeypatch):
    monkeypatch.setenv(DATA_ROOT_ENV, str(seq.parent))
    code = main(["-q", "run", "--data", seq.name, "--skip", "4", "--out-traj", str(tmp_path / "t.txt")])
    assert code == EXIT_OK
    assert len(read_trajectory(tmp_path / "t.txt")[1]) == 2


def test_missing_data_without_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(DATA_ROOT_ENV, raising=False)
    assert main(["run", "--out-traj", str(tmp_path / "t.txt")]) == EXIT_USAGE
    assert DATA_ROOT_ENV in capsys.readouterr().err


def test_bad_config_is_usage_error(seq, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[pipeline]\nspeed = 3\n")
    code = main(["run", "--data", str(seq), "--config", str(cfg), "--out-traj", str(tmp_path / "t.txt")])
    assert code == EXIT_USAGE


def test_eval_lost_tracking(tmp_path):
    truth = [RigidTransform(np.eye(3), [float(k), 0, 0]) for k in range(201)]
    write_trajectory(truth, tmp_path / "truth.txt")
    write_trajectory([RigidTransform()] * 201, tmp_path / "est.txt")
    code = main(["-q", "eval", "--traj", str(tmp_path / "est.txt"), "--truth", str(tmp_path / "truth.txt"),
                 "--segments", "100..200"])
    assert code == EXIT_LOST


def test_eval_too_short_is_data_error(tmp_path):
    write_trajectory([RigidTransform()] * 3, tmp_path / "t.txt")
    assert main(["eval", "--traj", str(tmp_path / "t.txt"), "--truth", str(tmp_path / "t.txt")]) == EXIT_DATA


def test_eval_bad_segments(tmp_path):
    assert main(["eval", "--traj", "a", "--truth", "b", "--segments", "800..100"]) == EXIT_USAGE


def test_register_pair_dumps(seq, tmp_path):
    scans = sorted((seq / "velodyne").glob("*.bin"))
    dump = tmp_path / "dump"
    assert main(["-q", "register-pair", "--a", str(scans[0]), "--b", str(scans[1]), "--dump-dir", str(dump)]) == EXIT_OK
    for name in ("grid_a.pgm", "grid_b.pgm", "poc_rotation.npy", "poc_translation.pgm", "coarse.txt",
                 "icp.txt", "summary.txt"):
        assert (dump / name).is_file()
    (icp,) = read_kitti_poses(dump / "icp.txt")
    truth = read_kitti_poses(seq / "poses.txt")
    assert np.linalg.norm(icp.translation - (truth[0].inverse() @ truth[1]).translation) < 0.02


def test_rasterize_pgm(seq, tmp_path):
    scan = sorted((seq / "velodyne").glob("*.bin"))[0]
    out = tmp_path / "g.pgm"
    assert main(["-q", "rasterize", "--scan", str(scan), "--out", str(out)]) == EXIT_OK
    assert out.read_bytes().startswith(b"P5\n512 512\n255\n")


def test_synth_rejects_bad_counts(tmp_path):
    assert main(["synth", "--sweeps", "0", "--out", str(tmp_path)]) == EXIT_USAGE
