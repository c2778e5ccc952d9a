"""Horizontal plane extraction from H-classified pixels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .components import component_sizes, label_wrap
from .panogeom import EPS_OFFSET, DepthMap, PlaneParam
from .pixelclass import PixelClassMap

H_INLIER_BAND = 0.05  # metres


@dataclass
class HPlaneInstance:
    mask: np.ndarray
    z: float

    @property
    def param(self) -> PlaneParam:
        return PlaneParam.horizontal(self.z)


def densest_h_offset(z_values, half_width: float) -> tuple[float, int]:
    """Offset whose +-half_width band holds the most values.

    Exact: every optimal band can be slid until its lower edge touches a
    sample, so scanning windows that start at each sorted sample is enough.
    The returned offset is the mean of the covered samples (clamped so that
    its band still holds all of them), so a few strays inside the band
    barely move it; ties in count go to the smaller offset.
    """
    z = np.sort(np.asarray(z_values, dtype=float).ravel())
    if z.size == 0:
        raise ValueError("need at least one offset")
    if not half_width > 0:
        raise ValueError("half_width must be positive")
    end = np.searchsorted(z, z + 2 * half_width, side="right") - 1
    counts = end - np.arange(z.size) + 1
    top = np.flatnonzero(counts == counts.max())
    csum = np.concatenate([[0.0], np.cumsum(z)])
    means = (csum[end[top] + 1] - csum[top]) / counts[top]
    # nearest point to the mean whose +-half_width band still holds every covered sample
    centres = np.clip(means, z[end[top]] - half_width, z[top] + half_width)
    k = int(np.argmin(centres))
    return float(centres[k]), int(counts[top[k]])


def _heights(depth: DepthMap) -> np.ndarray:
    _, v = depth.grid.angles()
    return np.where(depth.valid, depth.values * np.sin(v), np.nan)


def extract_h_planes(
    depth: DepthMap,
    pcm: PixelClassMap,
    min_cc: int | None = None,
    band: float = H_INLIER_BAND,
) -> list[HPlaneInstance]:
    if pcm.grid != depth.grid:
        raise ValueError("depth and class map grids differ")
    if min_cc is None:
        min_cc = depth.grid.scaled_min_cc()
    z = _heights(depth)
    remaining = pcm.h_mask & depth.valid & (np.abs(np.nan_to_num(z)) > EPS_OFFSET)
    found: list[HPlaneInstance] = []
    while remaining.any():
        z_star, _ = densest_h_offset(z[remaining], band)
        inliers = remaining & (np.abs(z - z_star) <= band)
        labels, n = label_wrap(inliers)
        sizes = component_sizes(labels, n)
        keep = [i for i in range(1, n + 1) if sizes[i] >= min_cc]
        if not keep:
            break
        batch = [HPlaneInstance(labels == i, z_star) for i in keep]
        found.extend(batch)
        remaining &= ~inliers
    return found


def refine_h_planes(instances: list[HPlaneInstance], depth: DepthMap, pcm: PixelClassMap) -> list[HPlaneInstance]:
    """Reassign every H-pixel to the nearest plane height, then re-estimate heights as inlier means.

    On equal distance a pixel stays with the instance that already owns it;
    an unowned pixel goes to the spatially nearest tied instance (several
    instances can share one height), then to the lowest index.
    """
    if not instances:
        return []
    z = _heights(depth)
    pix = pcm.h_mask & depth.valid
    zs = np.array([inst.z for inst in instances])
    zp = z[pix]
    dist = np.abs(zp[:, None] - zs[None, :])
    best = np.argmin(dist, axis=1)
    owner = np.full(depth.shape, -1)
    for k, inst in enumerate(instances):
        owner[inst.mask] = k
    cur = owner[pix]
    has_owner = cur >= 0
    keep_cur = np.zeros_like(has_owner)
    keep_cur[has_owner] = dist[has_owner, cur[has_owner]] <= dist[has_owner, best[has_owner]]
    best = np.where(keep_cur, cur, best)
    near = _nearest_owner(owner)[pix]
    free = ~has_owner & (near >= 0)
    tie = np.zeros_like(free)
    tie[free] = dist[free, near[free]] <= dist[free, best[free]]
    best = np.where(tie, near, best)

    assign = np.full(depth.shape, -1)
    assign[pix] = best
    out = []
    for k in range(len(instances)):
        m = assign == k
        if not m.any():
            continue
        zk = float(np.mean(z[m]))
        if abs(zk) <= EPS_OFFSET:
            continue
        out.append(HPlaneInstance(m, zk))
    return out


def _nearest_owner(owner: np.ndarray) -> np.ndarray:
    """Owner index of the closest owned pixel, with the left/right seam wrapped."""
    if not (owner >= 0).any():
        return owner
    w = owner.shape[1]
    pad = w // 2
    wide = np.pad(owner, ((0, 0), (pad, pad)), mode="wrap")
    _, (ri, ci) = ndimage.distance_transform_edt(wide < 0, return_indices=True)
    return wide[ri, ci][:, pad:pad + w]
