"""Synthetic box-and-plane worlds and a multi-beam LiDAR raycaster.

Used to produce sequences with exact ground-truth poses: a straight street
("corridor") and a street ending in a T junction with a 90 degree left turn
("t-merge").  Scans are returned in a KITTI-style sensor frame (x forward,
y left, z up) with the sensor ``mount_height`` above the ground.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud, RigidTransform, rot_z


@dataclass(frozen=True)
class BeamPattern:
    n_beams: int
    elevation_min_deg: float
    elevation_max_deg: float
    n_azimuth: int
    max_range: float = 100.0
    min_range: float = 1.0

    def directions(self):
        elev = np.radians(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.n_beams))
        az = 2 * np.pi * np.arange(self.n_azimuth) / self.n_azimuth
        e, a = np.meshgrid(elev, az, indexing="ij")
        return np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1).reshape(-1, 3)


HDL64 = BeamPattern(64, -24.8, 2.0, 2000, max_range=120.0)
VLP16 = BeamPattern(16, -15.0, 15.0, 1800, max_range=100.0)
PATTERNS = {"hdl64": HDL64, "vlp16": VLP16}


@dataclass
class World:
    """Flat ground at ``z = 0`` plus axis-aligned boxes ``(lo, hi)``."""

    lo: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    hi: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    small: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def add_box(self, lo, hi, small=False):
        self.lo = np.vstack([self.lo, lo])
        self.hi = np.vstack([self.hi, hi])
        self.small = np.append(self.small, small)

    def raycast(self, origin, dirs, chunk=4096, max_range=np.inf):
        """Distance along each unit ray to the first hit (``inf`` if none).

        Boxes entirely beyond ``max_range`` are skipped; hits past that range
        may then be reported further away than they are.
        """
        origin = np.asarray(origin, dtype=np.float64)
        t_best = np.full(len(dirs), np.inf)
        down = dirs[:, 2] < -1e-12
        t_best[down] = -origin[2] / dirs[down, 2]
        gap = np.maximum(np.maximum(self.lo - origin, origin - self.hi), 0.0)
        near = np.linalg.norm(gap, axis=1) <= max_range
        lo, hi = self.lo[near], self.hi[near]
        if len(lo) == 0:
            return t_best
        with np.errstate(divide="ignore", invalid="ignore"):
            for start in range(0, len(dirs), chunk):
                d = dirs[start : start + chunk]
                inv = 1.0 / np.where(np.abs(d) < 1e-12, 1e-12, d)
                t1 = (lo[None] - origin) * inv[:, None]
                t2 = (hi[None] - origin) * inv[:, None]
                t_near = np.minimum(t1, t2).max(axis=2)
                t_far = np.maximum(t1, t2).min(axis=2)
                hit = (t_far >= t_near) & (t_near > 0)
                t_box = np.where(hit, t_near, np.inf).min(axis=1)
                t_best[start : start + chunk] = np.minimum(t_best[start : start + chunk], t_box)
        return t_best


def scan(world: World, pose: RigidTransform, pattern: BeamPattern = HDL64, noise: float = 0.0, rng=None):
    """Points seen by a sensor at ``pose`` (sensor-to-world), in the sensor frame."""
    dirs = pattern.directions()
    t = world.raycast(pose.translation, dirs @ pose.rotation.T, max_range=pattern.max_range)
    ok = (t >= pattern.min_range) & (t <= pattern.max_range)
    t = t[ok]
    if noise > 0:
        rng = np.random.default_rng(0) if rng is None else rng
        t = t + rng.normal(0.0, noise, size=t.shape)
    return dirs[ok] * t[:, None]


def _street_side(world, rng, x0, x1, side, setback=(6.0, 9.0), along="x", offset=0.0):
    """Line a street edge with buildings between ``x0`` and ``x1``.

    ``side`` is +1/-1 for the positive/negative side of the street axis,
    ``offset`` the street centre-line coordinate across the axis.
    """
    x = x0
    while x < x1:
        length = rng.uniform(8.0, 25.0)
        sb = rng.uniform(*setback)
        depth = rng.uniform(5.0, 10.0)
        height = rng.uniform(6.0, 15.0)
        a, b = x, min(x + length, x1)
        c0 = offset + side * sb
        c1 = offset + side * (sb + depth)
        lo_c, hi_c = min(c0, c1), max(c0, c1)
        if along == "x":
            world.add_box([a, lo_c, 0.0], [b, hi_c, height])
        else:
            world.add_box([lo_c, a, 0.0], [hi_c, b, height])
        # parked car roughly every other block, well clear of the facade
        if rng.uniform() < 0.6 and b - a > 6.0:
            cx = rng.uniform(a + 2.0, b - 2.0)
            cc = offset + side * (sb - 2.5)
            if along == "x":
                world.add_box([cx - 2.0, cc - 0.9, 0.0], [cx + 2.0, cc + 0.9, 1.5], small=True)
            else:
                world.add_box([cc - 0.9, cx - 2.0, 0.0], [cc + 0.9, cx + 2.0, 1.5], small=True)
        x = b + rng.uniform(3.0, 8.0)


def corridor_world(length=150.0, seed=0) -> World:
    rng = np.random.default_rng(seed)
    w = World()
    _street_side(w, rng, -80.0, length + 120.0, +1)
    _street_side(w, rng, -80.0, length + 120.0, -1)
    return w


TMERGE_STRAIGHT = 60.0
TMERGE_RADIUS = 12.0


def tmerge_world(seed=0) -> World:
    """Stem street along +x joining a cross street along y at ``x = 72``."""
    rng = np.random.default_rng(seed)
    w = World()
    xb = TMERGE_STRAIGHT + TMERGE_RADIUS
    _street_side(w, rng, -80.0, xb - 12.0, +1)
    _street_side(w, rng, -80.0, xb - 12.0, -1)
    _street_side(w, rng, -100.0, 180.0, +1, along="y", offset=xb)
    _street_side(w, rng, -100.0, -10.0, -1, along="y", offset=xb)
    _street_side(w, rng, 12.0, 180.0, -1, along="y", offset=xb)
    return w


def sensor_pose(x, y, yaw, height):
    return RigidTransform(rot_z(yaw), [x, y, height])


def corridor_path(s, height=1.73):
    return sensor_pose(s, 0.0, 0.0, height)


def tmerge_path(s, height=1.73):
    a, r = TMERGE_STRAIGHT, TMERGE_RADIUS
    arc = np.pi / 2 * r
    if s <= a:
        return sensor_pose(s, 0.0, 0.0, height)
    if s <= a + arc:
        phi = (s - a) / r
        return sensor_pose(a + r * np.sin(phi), r * (1 - np.cos(phi)), phi, height)
    return sensor_pose(a + r, r + (s - a - arc), np.pi / 2, height)


WORLDS = {"corridor": (corridor_world, corridor_path), "t-merge": (tmerge_world, tmerge_path)}


@dataclass
class Sequence:
    clouds: list
    poses: list
    world: World


def generate_sequence(
    world="corridor",
    n_sweeps=100,
    speed=0.5,
    pattern: BeamPattern = HDL64,
    noise: float = 0.0,
    seed: int = 0,
    height: float = 1.73,
) -> Sequence:
    """Raycast ``n_sweeps`` scans along a world's path at ``speed`` m/sweep.

    Ground-truth poses are relative to the first sweep, so ``poses[0]`` is
    the identity.
    """
    if world not in WORLDS:
        raise ValueError(f"unknown world {world!r}; choose from {sorted(WORLDS)}")
    make_world, path = WORLDS[world]
    length = (n_sweeps - 1) * speed
    w = make_world(length=length, seed=seed) if world == "corridor" else make_world(seed=seed)
    rng = np.random.default_rng(seed + 1)
    first = path(0.0, height).inverse()
    clouds, poses = [], []
    for k in range(n_sweeps):
        pose = path(k * speed, height)
        pts = scan(w, pose, pattern, noise, rng)
        clouds.append(PointCloud(pts, sweep_index=k))
        poses.append(first @ pose)
    return Sequence(clouds, poses, w)
