"""End-to-end odometry on a synthetic T-merge and its drift score.

Generates 130 sweeps that drive straight, turn through a junction and
drive on, runs the full pipeline and scores it with the segment metric.
Takes a minute or two on one core.  Run: python demos/tmerge_odometry.py
"""
import numpy as np

from pocodom import PipelineConfig, run_sequence
from pocodom.evaluation import evaluate, timing_summary
from pocodom.geometry import relative_angle
from pocodom.synth import generate_sequence


def main():
    seq = generate_sequence("t-merge", n_sweeps=130, speed=1.0)
    for skip in (1, 2):
        config = PipelineConfig(frame_skip=skip)
        result = run_sequence(seq.clouds, config)
        traj = result.trajectory
        final = seq.poses[traj.indices[-1]]
        err = np.linalg.norm(traj.poses[-1].translation - final.translation)
        ang = np.degrees(relative_angle(traj.poses[-1], final))
        mean_ms, p95_ms = timing_summary([r.cycle_ms for r in result.reports[1:]])
        drift = evaluate(traj, seq.poses, (50.0, 100.0))
        degraded = sum(r.degraded for r in result.reports)
        print(f"frame skip {skip}: {len(traj)} poses, final error {err:.3f} m / {ang:.3f} deg, "
              f"drift {drift.percent_error_per_100m:.3f} %/100m, degraded {degraded}, "
              f"cycle {mean_ms:.0f} ms (p95 {p95_ms:.0f})")


if __name__ == "__main__":
    main()
