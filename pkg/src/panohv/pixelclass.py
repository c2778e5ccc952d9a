"""Local H/V/Other pixel classification from a depth panorama, plus the
vertical-neighbour angle statistics that motivate it."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .components import label_wrap, component_sizes
from .panogeom import DepthMap, ImageGrid

DISPLACEMENT_CAP = 0.1  # metres


class PixelClass(IntEnum):
    OTHER = 0
    H = 1
    V = 2
    INVALID = 3


@dataclass
class PixelClassMap:
    labels: np.ndarray  # uint8 PixelClass codes

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.grid = ImageGrid.from_shape(self.labels.shape)

    @property
    def h_mask(self) -> np.ndarray:
        return self.labels == PixelClass.H

    @property
    def v_mask(self) -> np.ndarray:
        return self.labels == PixelClass.V

    def copy(self) -> "PixelClassMap":
        return PixelClassMap(self.labels.copy())


@dataclass
class AngleHistogram:
    counts: np.ndarray  # 90 one-degree bins; 90 deg itself lands in the last bin

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def fraction(self, lo: float, hi: float) -> float:
        """Share of votes in bins whose range lies in [lo, hi] degrees."""
        if self.total == 0:
            return 0.0
        return float(self.counts[int(lo):int(hi)].sum()) / self.total


def vertical_pair_angle(p_top, p_bot) -> float:
    """Elevation angle, in degrees, of the segment joining two 3D points."""
    d = np.asarray(p_top, dtype=float) - np.asarray(p_bot, dtype=float)
    if not np.any(d):
        raise ValueError("coincident points have no angle")
    return math.degrees(math.atan2(abs(d[2]), math.hypot(d[0], d[1])))


def _column_coords(depth: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal range and height of every pixel (NaN where invalid).

    All points of one column lie in the vertical half-plane at yaw u, so
    (range, height) is the 2D local frame of that column.
    """
    _, v = depth.grid.angles()
    d = np.where(depth.valid, depth.values, np.nan)
    return d * np.cos(v), d * np.sin(v)


def _pair_angles(rho: np.ndarray, z: np.ndarray) -> np.ndarray:
    dy = rho[:-1] - rho[1:]
    dz = z[:-1] - z[1:]
    with np.errstate(invalid="ignore"):
        return np.degrees(np.arctan2(np.abs(dz), np.abs(dy)))


def angle_histogram(depth: DepthMap) -> AngleHistogram:
    rho, z = _column_coords(depth)
    ang = _pair_angles(rho, z)
    ok = depth.valid[:-1] & depth.valid[1:]
    same = (rho[:-1] == rho[1:]) & (z[:-1] == z[1:])
    ang = ang[ok & ~same]
    bins = np.minimum(np.floor(ang).astype(int), 89)
    return AngleHistogram(np.bincount(bins, minlength=90))


def _threshold_hvo(theta, t_h, t_v, z_cap, y_cap):
    out = np.full(theta.shape, PixelClass.OTHER, dtype=np.uint8)
    is_h = (theta < t_h) & (z_cap < DISPLACEMENT_CAP)
    is_v = ~is_h & (theta > t_v) & (y_cap < DISPLACEMENT_CAP)
    out[is_h] = PixelClass.H
    out[is_v] = PixelClass.V
    return out


def classify_pixels(depth: DepthMap, stride: int = 1) -> PixelClassMap:
    """Label every pixel H, V, Other or Invalid from its vertical neighbours.

    ``stride`` > 1 compares against the pixels ``stride`` rows above and
    below instead of the adjacent ones; it trades boundary sharpness for
    tolerance to per-pixel depth noise. The first and last ``stride`` rows
    are Other.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rho, z = _column_coords(depth)
    H, W = depth.shape
    labels = np.full((H, W), PixelClass.OTHER, dtype=np.uint8)
    labels[~depth.valid] = PixelClass.INVALID
    s = stride
    if H <= 2 * s:
        return PixelClassMap(labels)

    c = slice(s, H - s)
    top, bot = slice(0, H - 2 * s), slice(2 * s, H)
    yt, zt = rho[top] - rho[c], z[top] - z[c]
    yb, zb = rho[bot] - rho[c], z[bot] - z[c]
    ok = depth.valid[c] & depth.valid[top] & depth.valid[bot]
    d = np.where(ok, depth.values[c], 1.0)
    yt, zt, yb, zb = (np.where(ok, a, 0.0) for a in (yt, zt, yb, zb))

    t_h = np.minimum(d * 5.0, 40.0)
    t_v = 90.0 - t_h
    th_t = np.degrees(np.arctan2(np.abs(zt), np.abs(yt)))
    th_b = np.degrees(np.arctan2(np.abs(zb), np.abs(yb)))
    z_cap = np.maximum(np.abs(zt), np.abs(zb))
    y_cap = np.maximum(np.abs(yt), np.abs(yb))
    type_t = _threshold_hvo(th_t, t_h, t_v, z_cap, y_cap)
    type_b = _threshold_hvo(th_b, t_h, t_v, z_cap, y_cap)

    Hc, Vc, O = PixelClass.H, PixelClass.V, PixelClass.OTHER
    out = np.full(type_t.shape, O, dtype=np.uint8)
    out[(type_t == Hc) & (type_b != Vc)] = Hc
    out[(type_t == O) & (type_b == Hc)] = Hc
    out[(type_t == Vc) & (type_b != Hc)] = Vc
    out[(type_t == O) & (type_b == Vc)] = Vc
    vh = (type_t == Vc) & (type_b == Hc)
    out[vh] = np.where(90.0 - th_t[vh] < th_b[vh], Vc, Hc)
    hv = (type_t == Hc) & (type_b == Vc)
    out[hv] = np.where(th_t[hv] < 90.0 - th_b[hv], Hc, Vc)
    out[~ok] = O

    inner = labels[c]
    inner[depth.valid[c]] = out[depth.valid[c]]
    return PixelClassMap(labels)


def cc_cleanup(pcm: PixelClassMap, min_size: int | None = None) -> PixelClassMap:
    """Turn H or V components smaller than ``min_size`` pixels into Other."""
    if min_size is None:
        min_size = pcm.grid.scaled_min_cc()
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    out = pcm.labels.copy()
    for cls in (PixelClass.H, PixelClass.V):
        labels, n = label_wrap(out == cls)
        if n == 0:
            continue
        small = component_sizes(labels, n) < min_size
        small[0] = False
        out[small[labels]] = PixelClass.OTHER
    return PixelClassMap(out)


def coverage_summary(pcm: PixelClassMap) -> dict:
    valid = pcm.labels != PixelClass.INVALID
    n = max(int(valid.sum()), 1)
    return {
        "valid_pixels": int(valid.sum()),
        "h_fraction": float(pcm.h_mask.sum()) / n,
        "v_fraction": float(pcm.v_mask.sum()) / n,
        "other_fraction": float((pcm.labels == PixelClass.OTHER).sum()) / n,
    }
