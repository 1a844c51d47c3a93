"""Command-line front end: run, eval, register-pair, rasterize, synth.

Exit codes: 0 success, 1 data error, 2 usage error, 3 lost tracking (eval).
Progress goes to standard error; results go to files.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import dump_config, load_config
from .dataset_io import (
    MAP_FORMATS,
    TRAJECTORY_FORMATS,
    SweepSource,
    read_kitti_poses,
    read_kitti_scan,
    read_trajectory,
    trajectory_format,
    write_map,
    write_sequence,
    write_trajectory,
)
from .errors import ConfigError, OdometryError
from .evaluation import DEFAULT_SEGMENTS, evaluate
from .grid import rasterize, to_probability, write_pgm
from .icp import estimate_normals, point_to_plane_icp
from .pipeline import PipelineConfig, Trajectory, preprocess, run_sequence, write_report
from .poc import estimate_coarse
from .synth import PATTERNS, WORLDS, generate_sequence

DATA_ROOT_ENV = "POCODOM_DATA_ROOT"
EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_LOST = 0, 1, 2, 3

log = logging.getLogger("pocodom")


class UsageError(Exception):
    pass


def _segments(text):
    """``100..800`` (step 100), ``100..800:200`` or a comma list."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo, hi = (float(v) for v in span.split(".."))
            step = float(step) if step else 100.0
            if step <= 0 or hi < lo:
                raise ValueError
            return tuple(np.arange(lo, hi + step / 2, step))
        values = tuple(float(v) for v in text.split(",") if v.strip())
        if not values:
            raise ValueError
        return values
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad segment list {text!r}") from None


def _data_dir(arg):
    """``--data``, resolved against the data-root environment variable if relative."""
    root = os.environ.get(DATA_ROOT_ENV)
    if arg is None:
        if root is None:
            raise UsageError(f"--data is required when {DATA_ROOT_ENV} is not set")
        return Path(root)
    path = Path(arg)
    if not path.is_absolute() and not path.exists() and root is not None:
        return Path(root) / path
    return path


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "skip", None) is not None:
        cfg = replace(cfg, frame_skip=args.skip)
    if getattr(args, "no_object_removal", False):
        cfg = replace(cfg, enable_object_removal=False)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    return cfg


def cmd_run(args):
    cfg = _config(args)
    source = SweepSource.open(_data_dir(args.data), convention=cfg.frame_convention)
    log.info("running %d scans from %s (skip %d)", len(source), source.root, cfg.frame_skip)
    log.info("effective config:\n%s", dump_config(cfg).rstrip())

    def progress(rep):
        log.info("sweep %d: %.0f ms%s", rep.sweep_index, rep.cycle_ms, " (degraded)" if rep.degraded else "")

    result = run_sequence(source, cfg, progress)
    if len(result.trajectory) == 0:
        raise OdometryError(f"no sweep of {source.root} could be processed")
    write_trajectory(result.trajectory, args.out_traj, args.traj_format)
    if args.out_map:
        write_map(result.map_points, args.out_map, args.map_format)
    if args.report:
        notes = [f"dropped sweep {i}: {n} non-finite points" for i, n in sorted(source.dropped.items())]
        write_report(args.report, result, cfg, notes)
    log.info("wrote %d poses to %s", len(result.trajectory), args.out_traj)
    return EXIT_OK


def _read_report(path):
    with open(path) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    return [float(r["cycle_ms"]) for r in rows], sum(int(r["degraded"]) for r in rows)


def cmd_eval(args):
    indices, poses = read_trajectory(args.traj)
    truth = read_kitti_poses(args.truth)
    if args.skip is not None and trajectory_format(args.traj) == "kitti-12":
        indices = [args.skip * i for i in range(len(poses))]
    cycle_ms, degraded = None, 0
    if args.run_report:
        cycle_ms, degraded = _read_report(args.run_report)

    report = evaluate(Trajectory(tuple(indices), tuple(poses)), truth, args.segments, cycle_ms, degraded)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(report.rows())
    print(report.summary())
    return EXIT_LOST if report.lost_tracking else EXIT_OK


def cmd_register_pair(args):
    cfg = _config(args)
    a = read_kitti_scan(args.a, 0)
    b = read_kitti_scan(args.b, 1)
    out = Path(args.dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    kept_a, grid_cloud_a, rect_a = preprocess(a, cfg)
    kept_b, grid_cloud_b, rect_b = preprocess(b, cfg)
    conv = cfg.frame_convention
    grid_a = rasterize(grid_cloud_a, cfg.grid, conv)
    grid_b = rasterize(grid_cloud_b, cfg.grid, conv)
    coarse = estimate_coarse(grid_a, grid_b, cfg.poc, conv, keep_surfaces=True)
    init = rect_a.inverse() @ coarse.transform @ rect_b
    if coarse.low_confidence:
        log.warning("coarse confidence %.3f is low; starting ICP from identity", coarse.confidence)
        init = type(init)()
    target = estimate_normals(kept_a, cfg.icp.normal_neighbors, up=conv.up_vector, radius=cfg.icp.normal_radius)
    source = estimate_normals(kept_b, cfg.icp.normal_neighbors, up=conv.up_vector, radius=cfg.icp.normal_radius)
    result = point_to_plane_icp(source, target, init, cfg.icp)
    elapsed = 1e3 * (time.perf_counter() - t0)

    write_pgm(out / "grid_a.pgm", to_probability(grid_a))
    write_pgm(out / "grid_b.pgm", to_probability(grid_b))
    for name, peak in (("rotation", coarse.rotation_peak), ("translation", coarse.translation_peak)):
        surface = peak.surface
        np.save(out / f"poc_{name}.npy", surface)
        span = surface.max() - surface.min()
        write_pgm(out / f"poc_{name}.pgm", (surface - surface.min()) / (span if span > 0 else 1.0))
    write_trajectory([init], out / "coarse.txt")
    write_trajectory([result.transform], out / "icp.txt")
    with open(out / "summary.txt", "w") as fh:
        fh.write(
            f"theta_deg = {np.degrees(coarse.theta):.6f}\n"
            f"shift_pixels = {coarse.shift_pixels[0]:.4f} {coarse.shift_pixels[1]:.4f}\n"
            f"rotation_peak = {coarse.rotation_peak.peak_value:.6f}\n"
            f"translation_peak = {coarse.translation_peak.peak_value:.6f}\n"
            f"coarse = {init!r}\n"
            f"icp = {result.transform!r}\n"
            f"icp_rmse = {result.final_rmse:.6f}\n"
            f"icp_iterations = {result.iterations_used}\n"
            f"icp_converged = {result.converged}\n"
            f"elapsed_ms = {elapsed:.1f}\n"
        )
    log.info("coarse %r, icp %r", init, result.transform)
    return EXIT_OK


def cmd_rasterize(args):
    cfg = _config(args)
    cloud = read_kitti_scan(args.scan)
    _, grid_cloud, _ = preprocess(cloud, cfg)
    grid = rasterize(grid_cloud, cfg.grid, cfg.frame_convention)
    write_pgm(args.out, to_probability(grid))
    occupied = int(np.count_nonzero(grid.hits))
    log.info("wrote %dx%d grid with %d occupied cells to %s", cfg.grid.n, cfg.grid.n, occupied, args.out)
    return EXIT_OK


def cmd_synth(args):
    if args.sweeps < 1 or args.speed < 0:
        raise UsageError("--sweeps must be >= 1 and --speed >= 0")
    seq = generate_sequence(
        args.world, args.sweeps, args.speed, PATTERNS[args.pattern], args.noise, args.seed
    )
    write_sequence(args.out, seq.clouds, seq.poses)
    log.info("wrote %d %s sweeps of %r to %s", args.sweeps, args.pattern, args.world, args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pocodom", description=__doc__.splitlines()[0])
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="estimate a trajectory and map from a scan directory")
    r.add_argument("--data", help=f"scan directory (relative paths resolve against ${DATA_ROOT_ENV})")
    r.add_argument("--config", help="INI file with pipeline parameters")
    r.add_argument("--skip", type=int, help="process every s-th sweep")
    r.add_argument("--out-traj", required=True)
    r.add_argument("--out-map")
    r.add_argument("--traj-format", choices=TRAJECTORY_FORMATS, default="kitti-12")
    r.add_argument("--map-format", choices=MAP_FORMATS, default="pcd-ascii")
    r.add_argument("--no-object-removal", action="store_true")
    r.add_argument("--seed", type=int)
    r.add_argument("--report", help="per-sweep CSV report")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="drift of a trajectory against ground truth")
    e.add_argument("--traj", required=True, help="kitti-12 or tum-8 trajectory")
    e.add_argument("--truth", required=True, help="kitti-12 ground-truth poses, one per sweep")
    e.add_argument("--segments", type=_segments, default=DEFAULT_SEGMENTS,
                   help="segment lengths in m: '100..800', '100..800:200' or '100,200'")
    e.add_argument("--skip", type=int, help="sweep stride of a kitti-12 trajectory")
    e.add_argument("--run-report", help="report written by 'run', for timing figures")
    e.add_argument("--out", help="per-segment CSV")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("register-pair", help="coarse and ICP registration of two scans")
    g.add_argument("--a", required=True, help="older scan")
    g.add_argument("--b", required=True, help="newer scan")
    g.add_argument("--dump-dir", required=True)
    g.add_argument("--config")
    g.set_defaults(func=cmd_register_pair)

    z = sub.add_parser("rasterize", help="occupancy grid of one scan as PGM")
    z.add_argument("--scan", required=True)
    z.add_argument("--out", required=True)
    z.add_argument("--config")
    z.set_defaults(func=cmd_rasterize)

    s = sub.add_parser("synth", help="raycast a synthetic sequence with ground truth")
    s.add_argument("--world", choices=sorted(WORLDS), default="corridor")
    s.add_argument("--sweeps", type=int, default=100)
    s.add_argument("--speed", type=float, default=0.5, help="metres per sweep")
    s.add_argument("--pattern", choices=sorted(PATTERNS), default="hdl64")
    s.add_argument("--noise", type=float, default=0.0, help="range noise sigma in m")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"pocodom {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OdometryError, ValueError, OSError) as exc:
        print(f"pocodom {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
