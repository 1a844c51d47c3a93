"""Coarse 3-DOF scan matching by phase-only correlation of occupancy images.

Rotation comes from POC between the polar-mapped amplitude spectra (where a
rotation becomes a shift along the angle axis), translation from POC between
the reference image and the de-rotated new image.  Peaks are refined to
sub-pixel precision by a centre-of-gravity fit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import KITTI, FrameConvention, RigidTransform, rot_z
from .grid import OccupancyGrid, to_probability

LOW_CONFIDENCE = 0.1


@dataclass(frozen=True)
class PocParams:
    r_min: float = 5.0
    cog_window: int = 5
    # width (pixels) of the Gaussian weighting of the cross-power spectrum;
    # 0 disables it and leaves the raw delta-like peak
    peak_sigma: float = 0.75
    magnitude_threshold: float = 1e-12
    log_spectrum: bool = False


@dataclass(frozen=True)
class PocPeak:
    """Shift ``d`` such that ``b(n) ~ a(n - d)``, in pixels along (axis 0, axis 1)."""

    shift: np.ndarray
    peak_value: float
    integer_peak: tuple
    surface: np.ndarray | None = None

    @property
    def low_confidence(self):
        return self.peak_value < LOW_CONFIDENCE


@dataclass(frozen=True)
class PolarSpectrum:
    """``values[l1, l2]``: l1 runs over radius, l2 over angle in ``[0, pi)``."""

    values: np.ndarray
    radii: np.ndarray
    angles: np.ndarray


@dataclass(frozen=True)
class CoarseTransform:
    """Planar motion taking sweep k+1 coordinates into sweep k coordinates."""

    theta: float
    shift_pixels: np.ndarray
    transform: RigidTransform
    confidence: float
    rotation_peak: PocPeak | None = None
    translation_peak: PocPeak | None = None

    @property
    def low_confidence(self):
        return self.confidence < LOW_CONFIDENCE


def hann(n):
    """``0.5 (1 - cos(2 pi k / (n - 1)))`` for ``k = 0 .. n-1``."""
    return np.hanning(n)


def window(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError("window expects a square image")
    w = hann(img.shape[0])
    return img * np.outer(w, w)


def amplitude_spectrum(img):
    """``|FFT(img)|`` with the zero frequency moved to the image centre."""
    return np.abs(np.fft.fftshift(np.fft.fft2(img)))


def _gaussian_weight(shape, sigma):
    fu = np.fft.fftfreq(shape[0])[:, None]
    fv = np.fft.fftfreq(shape[1])[None, :]
    return np.exp(-2.0 * np.pi**2 * sigma**2 * (fu**2 + fv**2))


def _cog(surface, peak, half):
    """Centroid of the clamped-positive surface around ``peak``, wrapping at edges."""
    offsets = np.arange(-half, half + 1)
    rows = (peak[0] + offsets) % surface.shape[0]
    cols = (peak[1] + offsets) % surface.shape[1]
    patch = np.maximum(surface[np.ix_(rows, cols)], 0.0)
    total = patch.sum()
    if total <= 0:
        return np.array(peak, dtype=np.float64)
    d0 = (patch.sum(axis=1) @ offsets) / total
    d1 = (patch.sum(axis=0) @ offsets) / total
    return np.array([peak[0] + d0, peak[1] + d1])


def _wrap(v, n):
    return (v + n // 2) % n - n // 2


def cross_power_peak(a, b, params: PocParams = PocParams(), keep_surface=False) -> PocPeak:
    """Phase-only correlation of two equally sized real images.

    ``R = A B* / |A B*|`` (bins with ``|A B*|`` below the threshold are
    zeroed), optionally tapered by a Gaussian so the correlation peak spans
    a few pixels and the centroid fit is unbiased.  The surface is scaled so
    that identical inputs peak at exactly 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("images must have the same shape")
    cross = np.fft.fft2(a) * np.conj(np.fft.fft2(b))
    mag = np.abs(cross)
    valid = mag > params.magnitude_threshold
    R = np.zeros_like(cross)
    R[valid] = cross[valid] / mag[valid]
    if params.peak_sigma > 0:
        w = _gaussian_weight(a.shape, params.peak_sigma)
        R *= w
        norm = w[valid].sum()
    else:
        norm = valid.sum()
    if norm == 0:
        return PocPeak(np.zeros(2), 0.0, (0, 0), None)
    # A B* peaks at -d for b(n) = a(n - d); flip so the surface peaks at +d
    r = np.real(np.fft.ifft2(np.conj(R))) * (a.size / norm)
    peak = np.unravel_index(np.argmax(r), r.shape)
    fine = _cog(r, peak, params.cog_window // 2)
    shift = np.array([_wrap(fine[0], r.shape[0]), _wrap(fine[1], r.shape[1])])
    integer_peak = (int(_wrap(peak[0], r.shape[0])), int(_wrap(peak[1], r.shape[1])))
    surface = np.fft.fftshift(r) if keep_surface else None
    return PocPeak(shift, float(r[peak]), integer_peak, surface)


def polar_map(spectrum_magnitude, r_min=5.0, n_radius=None, n_angle=None) -> PolarSpectrum:
    """Bilinear resampling of a DC-centred spectrum onto (radius, angle).

    Radii run from ``r_min`` to ``N/2`` so the DC bin and its immediate
    neighbourhood never contribute; angles cover a half turn.
    """
    mag = np.asarray(spectrum_magnitude, dtype=np.float64)
    n = mag.shape[0]
    n_radius = n if n_radius is None else n_radius
    n_angle = n if n_angle is None else n_angle
    c = n // 2
    radii = r_min + (n / 2.0 - r_min) * np.arange(n_radius) / n_radius
    angles = np.pi * np.arange(n_angle) / n_angle
    rows = c + radii[:, None] * np.cos(angles)[None, :]
    cols = c + radii[:, None] * np.sin(angles)[None, :]
    values = ndimage.map_coordinates(mag, [rows, cols], order=1, mode="constant", cval=0.0)
    return PolarSpectrum(values, radii, angles)


def rotate_image(img, theta):
    """Rotate image content by ``theta`` about the centre pixel.

    Content at centred coordinates ``x`` moves to ``R(theta) x`` where the
    rotation turns axis 0 towards axis 1.
    """
    img = np.asarray(img, dtype=np.float64)
    n = img.shape[0]
    c = np.array([n // 2, n // 2], dtype=np.float64)
    cs, sn = np.cos(theta), np.sin(theta)
    inv = np.array([[cs, sn], [-sn, cs]])
    return ndimage.affine_transform(img, inv, offset=c - inv @ c, order=1, mode="constant", cval=0.0)


def _normalize_half_turn(theta):
    # into (-pi/2, pi/2]
    t = (theta + np.pi / 2) % np.pi - np.pi / 2
    return np.pi / 2 if np.isclose(t, -np.pi / 2) else t


def _normalize_turn(theta):
    return (theta + np.pi) % (2 * np.pi) - np.pi


def estimate_rotation(f_img, g_img, params: PocParams = PocParams(), keep_surface=False):
    """Rotation ``theta`` (mod pi) with ``g ~ rotate_image(f, theta)``.

    Inputs are windowed images.  Returns ``(theta, peak)``, ``theta`` in
    ``(-pi/2, pi/2]``.
    """
    fa = amplitude_spectrum(f_img)
    ga = amplitude_spectrum(g_img)
    if params.log_spectrum:
        fa, ga = np.log1p(fa), np.log1p(ga)
    fp = polar_map(fa, params.r_min)
    gp = polar_map(ga, params.r_min)
    peak = cross_power_peak(fp.values, gp.values, params, keep_surface)
    n_angle = fp.values.shape[1]
    theta = np.pi * peak.shift[1] / n_angle
    return _normalize_half_turn(theta), peak


def coarse_from_pixels(theta, shift, grid_params, conv: FrameConvention = KITTI) -> RigidTransform:
    """Metric planar transform from an image rotation and shift.

    With ``g = rotate(f shifted by d, theta)``, a static point at pixel ``y``
    in ``f`` lies at ``R(theta)(y + d)`` in ``g``.  Image axis 0 is left and
    axis 1 is forward, so the yaw taking sweep k+1 into sweep k is
    ``theta`` and the translation is ``-d * resolution``.
    """
    res = grid_params.resolution
    t_left, t_fwd = -shift[0] * res, -shift[1] * res
    R_can = rot_z(theta)
    t_can = np.array([t_fwd, t_left, 0.0])
    B = conv.basis
    return RigidTransform(B.T @ R_can @ B, B.T @ t_can)


def estimate_coarse(
    f: OccupancyGrid,
    g: OccupancyGrid,
    params: PocParams = PocParams(),
    conv: FrameConvention = KITTI,
    keep_surfaces: bool = False,
) -> CoarseTransform:
    """Planar motion between two sweeps' grids (``f`` older, ``g`` newer).

    Both ``theta`` and ``theta + pi`` are tried for the de-rotation; the
    candidate whose translation peak is higher wins.  ``keep_surfaces``
    keeps both correlation surfaces on the returned peaks for inspection.
    """
    if f.params != g.params:
        raise ValueError("grids must share GridParams")
    fp = to_probability(f)
    gp = to_probability(g)
    fw = window(fp)
    theta, rot_peak = estimate_rotation(fw, window(gp), params, keep_surfaces)

    best = None
    for cand in (theta, _normalize_turn(theta + np.pi)):
        derot = rotate_image(gp, -cand)
        peak = cross_power_peak(fw, window(derot), params, keep_surfaces)
        if best is None or peak.peak_value > best[1].peak_value:
            best = (cand, peak)
    theta, tr_peak = best
    transform = coarse_from_pixels(theta, tr_peak.shift, f.params, conv)
    return CoarseTransform(
        theta=float(theta),
        shift_pixels=tr_peak.shift,
        transform=transform,
        confidence=float(min(rot_peak.peak_value, tr_peak.peak_value)),
        rotation_peak=rot_peak,
        translation_peak=tr_peak,
    )
