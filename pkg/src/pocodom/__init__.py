"""LiDAR odometry from occupancy-grid phase correlation and point-to-plane ICP."""
from .errors import OdometryError
from .geometry import KITTI, LEFT_UP_FORWARD, Frame, FrameConvention, PointCloud, RigidTransform
from .pipeline import PipelineConfig, Trajectory, process_sweep, run_sequence

__all__ = [
    "KITTI",
    "LEFT_UP_FORWARD",
    "Frame",
    "FrameConvention",
    "OdometryError",
    "PipelineConfig",
    "PointCloud",
    "RigidTransform",
    "Trajectory",
    "process_sweep",
    "run_sequence",
]
