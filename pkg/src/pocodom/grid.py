"""Log-odds occupancy rasters of rectified sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGrid
from .geometry import KITTI, FrameConvention, PointCloud


@dataclass(frozen=True)
class GridParams:
    n: int = 512
    resolution: float = 0.3
    l_occupied: float = float(np.log(2.0))
    l_prior: float = 0.0
    l_past: float = 0.0
    logistic: bool = False

    def __post_init__(self):
        if self.n < 64:
            raise ValueError("grid side must be >= 64 pixels")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def center(self):
        return self.n // 2

    @property
    def half_extent(self):
        return self.n * self.resolution / 2.0


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """``log_odds[i1, i2]``: axis 0 runs along left, axis 1 along forward.

    Pixel ``(center, center)`` is the sensor origin.
    """

    log_odds: np.ndarray
    params: GridParams
    sweep_index: int = 0
    hits: np.ndarray | None = None

    def probability(self):
        return to_probability(self)


def pixel_coordinates(points, params: GridParams, conv: FrameConvention = KITTI):
    """Integer ``(i1, i2)`` pixel indices and an in-footprint mask."""
    c = conv.to_canonical(points)
    i1 = np.rint(c[:, 1] / params.resolution).astype(np.int64) + params.center
    i2 = np.rint(c[:, 0] / params.resolution).astype(np.int64) + params.center
    inside = (i1 >= 0) & (i1 < params.n) & (i2 >= 0) & (i2 < params.n)
    return i1, i2, inside


def rasterize(cloud: PointCloud, params: GridParams = GridParams(), conv: FrameConvention = KITTI) -> OccupancyGrid:
    """Project a rectified cloud onto the ground plane and accumulate hits.

    Every cell starts at ``l_past - l_prior`` (the recursive and prior terms
    of the log-odds update; zero for independent per-sweep maps) and gains
    ``l_occupied`` per point.
    """
    i1, i2, inside = pixel_coordinates(cloud.points, params, conv)
    if not inside.any():
        raise EmptyGrid("no points inside the grid footprint")
    hits = np.zeros((params.n, params.n), dtype=np.int64)
    np.add.at(hits, (i1[inside], i2[inside]), 1)
    log_odds = params.l_past - params.l_prior + params.l_occupied * hits
    return OccupancyGrid(log_odds, params, cloud.sweep_index, hits)


def to_probability(grid, logistic: bool | None = None):
    """Cell occupancy probability ``1 - exp(-l)``, clamped to ``[0, 1)``.

    ``logistic=True`` uses ``1 / (1 + exp(-l))`` instead.
    """
    if isinstance(grid, OccupancyGrid):
        l = grid.log_odds
        if logistic is None:
            logistic = grid.params.logistic
    else:
        l = np.asarray(grid, dtype=np.float64)
    if logistic:
        p = 1.0 / (1.0 + np.exp(-l))
    else:
        p = np.maximum(-np.expm1(-l), 0.0)
    return np.minimum(p, np.nextafter(1.0, 0.0))


def write_pgm(path, image, scale=255.0):
    """8-bit binary PGM; values are multiplied by ``scale`` and clipped."""
    img = np.clip(np.rint(np.asarray(image, dtype=np.float64) * scale), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos + 1 : pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
