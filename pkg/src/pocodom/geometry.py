"""Rigid transforms, point clouds and axis conventions.

Everything here is an immutable value.  Arrays stored on the dataclasses are
marked read-only so a transform or cloud can be shared freely between
pipeline stages.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def _frozen(a, shape=None, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_so3(w):
    """Rodrigues' formula; ``w`` is an axis-angle vector in radians."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < 1e-12:
        return np.eye(3) + K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    return exp_so3(axis / np.linalg.norm(axis) * angle)


def rotation_angle(R):
    """Angle of the rotation ``R`` in [0, pi]."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def orthonormalize(R):
    """Nearest rotation matrix in the Frobenius sense (polar decomposition)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def is_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R)
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=tol)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """A rotation followed by a translation, ``p -> R p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("transform contains non-finite values")
        if not is_rotation(R):
            raise ValueError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m, orthonormal_tol=None):
        """Build from a 4x4 homogeneous or 3x4 ``[R|t]`` matrix.

        With ``orthonormal_tol`` set, a rotation block that is off by less
        than the tolerance is snapped to the nearest rotation.
        """
        m = np.asarray(m, dtype=np.float64)
        if m.shape not in ((4, 4), (3, 4)):
            raise ValueError(f"expected 4x4 or 3x4 matrix, got {m.shape}")
        R = m[:3, :3]
        if orthonormal_tol is not None and not is_rotation(R):
            if not is_rotation(R, orthonormal_tol):
                raise ValueError("rotation block is not orthonormal")
            R = orthonormalize(R)
        return cls(R, m[:3, 3])

    @classmethod
    def from_translation(cls, x, y=0.0, z=0.0):
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_euler(cls, alpha, beta, gamma, translation=(0.0, 0.0, 0.0)):
        """``t . Rz(gamma) Ry(beta) Rx(alpha)`` with angles about x, y, z."""
        R = rot_z(gamma) @ rot_y(beta) @ rot_x(alpha)
        return cls(R, translation)

    def euler(self):
        """Inverse of :meth:`from_euler`; returns ``(alpha, beta, gamma)``."""
        R = self.rotation
        beta = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
        alpha = np.arctan2(R[2, 1], R[2, 2])
        gamma = np.arctan2(R[1, 0], R[0, 0])
        return float(alpha), float(beta), float(gamma)

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def angle(self):
        return rotation_angle(self.rotation)

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def orthonormalized(self):
        return RigidTransform(orthonormalize(self.rotation), self.translation)

    def transform_points(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def __matmul__(self, other):
        if isinstance(other, RigidTransform):
            return compose(self, other)
        if isinstance(other, PointCloud):
            return apply(self, other)
        return self.transform_points(other)

    def __repr__(self):
        a, b, g = np.degrees(self.euler())
        t = self.translation
        return (
            f"RigidTransform(euler_deg=({a:.4f}, {b:.4f}, {g:.4f}), "
            f"t=({t[0]:.4f}, {t[1]:.4f}, {t[2]:.4f}))"
        )


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def translation_distance(a: RigidTransform, b: RigidTransform) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


def relative_angle(a: RigidTransform, b: RigidTransform) -> float:
    return rotation_angle(a.rotation.T @ b.rotation)


class Frame(enum.Enum):
    LIDAR = "lidar"
    WORLD = "world"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points of one sweep, ``(N, 3)`` in meters, tagged with their frame."""

    points: np.ndarray
    frame: Frame = Frame.LIDAR
    sweep_index: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        if self.sweep_index < 0:
            raise ValueError("sweep_index must be non-negative")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def with_points(self, pts, frame=None):
        return PointCloud(pts, self.frame if frame is None else frame, self.sweep_index)

    def select(self, mask):
        return self.with_points(self.points[mask])


def concat(a: PointCloud, b: PointCloud) -> PointCloud:
    from .errors import FrameMismatch

    if a.frame is not b.frame:
        raise FrameMismatch(f"cannot merge {a.frame.value} and {b.frame.value} clouds")
    return a.with_points(np.vstack([a.points, b.points]))


def apply(t: RigidTransform, cloud: PointCloud, frame: Frame | None = None) -> PointCloud:
    return cloud.with_points(t.transform_points(cloud.points), frame)


_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)


def voxel_keys(points, voxel):
    """One int64 per point identifying its voxel of side ``voxel``."""
    idx = np.floor(np.asarray(points, dtype=np.float64) / voxel).astype(np.int64) + _KEY_OFFSET
    if idx.size and (idx.min() < 0 or idx.max() >= 1 << _KEY_BITS):
        raise ValueError("points too far from the origin for this voxel size")
    return (idx[:, 0] << (2 * _KEY_BITS)) | (idx[:, 1] << _KEY_BITS) | idx[:, 2]


def voxel_downsample_index(points, voxel):
    """Indices of the first point (in input order) falling in each voxel."""
    points = np.asarray(points, dtype=np.float64)
    if voxel <= 0 or len(points) == 0:
        return np.arange(len(points))
    _, first = np.unique(voxel_keys(points, voxel), return_index=True)
    return np.sort(first)


def voxel_downsample(points, voxel):
    """Keep the first point (in input order) falling in each voxel."""
    points = np.asarray(points, dtype=np.float64)
    return points[voxel_downsample_index(points, voxel)]


@dataclass(frozen=True)
class FrameConvention:
    """Which native axis (index, sign) points forward, left and up."""

    forward: tuple = (0, 1)
    left: tuple = (1, 1)
    up: tuple = (2, 1)

    def __post_init__(self):
        axes = [self.forward[0], self.left[0], self.up[0]]
        if sorted(axes) != [0, 1, 2]:
            raise ValueError("forward, left and up must use distinct axes")
        if any(s not in (1, -1) for _, s in (self.forward, self.left, self.up)):
            raise ValueError("axis signs must be +1 or -1")
        if np.linalg.det(self.basis) < 0:
            raise ValueError("convention is not right-handed")

    @property
    def basis(self):
        """Rows are the forward, left and up unit vectors in native coordinates."""
        B = np.zeros((3, 3))
        for row, (axis, sign) in enumerate((self.forward, self.left, self.up)):
            B[row, axis] = sign
        return B

    @property
    def up_vector(self):
        return self.basis[2]

    def to_canonical(self, pts):
        """Native coordinates to ``(forward, left, up)`` columns."""
        pts = np.asarray(pts, dtype=np.float64)
        return np.stack(
            [sign * pts[..., axis] for axis, sign in (self.forward, self.left, self.up)],
            axis=-1,
        )

    def from_canonical(self, fwd_left_up):
        fwd_left_up = np.asarray(fwd_left_up, dtype=np.float64)
        out = np.empty_like(fwd_left_up)
        for col, (axis, sign) in enumerate((self.forward, self.left, self.up)):
            out[..., axis] = sign * fwd_left_up[..., col]
        return out


# Velodyne frame of the KITTI odometry benchmark.
KITTI = FrameConvention(forward=(0, 1), left=(1, 1), up=(2, 1))
# Sensor frame with x left, y up, z forward.
LEFT_UP_FORWARD = FrameConvention(forward=(2, 1), left=(0, 1), up=(1, 1))


def convert_frame(cloud: PointCloud, src: FrameConvention, dst: FrameConvention) -> PointCloud:
    """Relabel axes; pure sign/permutation so round trips are exact."""
    if src == dst:
        return cloud
    return cloud.with_points(dst.from_canonical(src.to_canonical(cloud.points)))
