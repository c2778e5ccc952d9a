"""Divide-and-conquer plane instance segmentation.

Divide: H-pixels split into up/down groups by image half; V-pixels vote
into a 360-bin circular orientation histogram and join their nearest peak.
Conquer: mean shift inside each group on per-pixel features (plane offsets
by default, or an external feature map), then connected components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .components import component_sizes, label_wrap
from .labels import InstanceLabelMap
from .panogeom import (
    DegenerateGeometryError,
    DepthMap,
    ImageGrid,
    PlaneKind,
    PlaneParam,
    circular_distance,
    wrap_angle,
)
from .pixelclass import PixelClassMap

N_BINS = 360
PEAK_RADIUS = 50
PEAK_MIN_VOTES = 100

MS_ITERATIONS = 18
MS_ANCHORS = 36
MS_SAMPLES = 11_000


# ---------------------------------------------------------------- histogram

@dataclass
class CircularHistogram:
    counts: np.ndarray

    @staticmethod
    def bin_of(theta) -> np.ndarray:
        t = wrap_angle(theta)
        b = np.floor((np.asarray(t) + np.pi) / (2 * np.pi) * N_BINS).astype(int)
        return np.clip(b, 0, N_BINS - 1) % N_BINS

    @staticmethod
    def bin_center(b) -> np.ndarray:
        return -np.pi + (np.asarray(b) + 0.5) * (2 * np.pi / N_BINS)


def build_orientation_histogram(theta_map: np.ndarray, v_mask: np.ndarray) -> CircularHistogram:
    theta_map = np.asarray(theta_map)
    v_mask = np.asarray(v_mask, dtype=bool)
    if theta_map.shape != v_mask.shape:
        raise ValueError("theta map and mask shapes differ")
    bins = CircularHistogram.bin_of(theta_map[v_mask])
    return CircularHistogram(np.bincount(bins, minlength=N_BINS))


def find_peaks(h: CircularHistogram, radius: int = PEAK_RADIUS, min_votes: int = PEAK_MIN_VOTES) -> list[int]:
    """Bins with at least ``min_votes`` that strictly beat every bin within ``radius`` (circularly)."""
    c = np.asarray(h.counts)
    n = len(c)
    ok = c >= min_votes
    for s in range(1, min(radius, n // 2) + 1):
        ok &= c > np.roll(c, s)
        ok &= c > np.roll(c, -s)
    return [int(b) for b in np.flatnonzero(ok)]


# ---------------------------------------------------------------- divide

@dataclass
class OrientationGroup:
    kind: PlaneKind
    orientation: float  # H: +1/-1 normal sign; V: peak angle (radians)


@dataclass
class OrientationGroupMap:
    groups: np.ndarray
    table: dict[int, OrientationGroup] = field(default_factory=dict)


def assign_groups(pcm: PixelClassMap, theta_map: np.ndarray, peaks: list[int], grid: ImageGrid | None = None) -> OrientationGroupMap:
    """Group ids: 1 = H facing up (ceilings), 2 = H below the camera, 3.. = V peaks in bin order."""
    grid = grid or pcm.grid
    _, v = grid.angles()
    groups = np.zeros(grid.shape, dtype=np.int64)
    table: dict[int, OrientationGroup] = {}
    h = pcm.h_mask
    if (h & (v > 0)).any():
        table[1] = OrientationGroup(PlaneKind.H, 1.0)
        groups[h & (v > 0)] = 1
    if (h & (v < 0)).any():
        table[2] = OrientationGroup(PlaneKind.H, -1.0)
        groups[h & (v < 0)] = 2
    vm = pcm.v_mask
    if peaks and vm.any():
        centres = CircularHistogram.bin_center(np.asarray(sorted(peaks)))
        dist = circular_distance(np.asarray(theta_map)[vm][:, None], centres[None, :])
        nearest = np.argmin(dist, axis=1)  # first minimum -> lower bin wins ties
        groups[vm] = 3 + nearest
        for j, c in enumerate(centres):
            table[3 + j] = OrientationGroup(PlaneKind.V, float(c))
    return OrientationGroupMap(groups, table)


# ---------------------------------------------------------------- conquer

@dataclass
class MeanShiftResult:
    labels: np.ndarray  # per input row; -1 = unassigned
    modes: np.ndarray   # (K, D)


def _farthest_point(samples: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    idx = [int(rng.integers(len(samples)))]
    d = np.linalg.norm(samples - samples[idx[0]], axis=1)
    while len(idx) < min(k, len(samples)):
        j = int(np.argmax(d))
        if d[j] == 0:
            break
        idx.append(j)
        d = np.minimum(d, np.linalg.norm(samples - samples[j], axis=1))
    return samples[idx]


def mean_shift(
    features: np.ndarray,
    bandwidth: float,
    seed: int = 0,
    n_samples: int = MS_SAMPLES,
    n_anchors: int = MS_ANCHORS,
    n_iter: int = MS_ITERATIONS,
) -> MeanShiftResult:
    """Anchor-based flat-kernel mean shift.

    ``features`` is (N, D). At most ``n_samples`` points support the kernel,
    taken at evenly spaced ranks of the lexicographically sorted features.
    The subset depends only on the multiset of feature values, never on
    pixel order, so rolling the image leaves the modes unchanged; ``n_anchors`` farthest-point anchors climb for
    ``n_iter`` steps, anchors closer than ``bandwidth / 2`` merge (the one
    with more support survives) and every point joins its nearest mode if
    it is within ``bandwidth``.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        return MeanShiftResult(np.zeros(0, dtype=np.int64), np.zeros((0, x.shape[1])))
    rng = np.random.default_rng(seed)
    samples = x[np.lexsort(x.T[::-1])]
    if len(x) > n_samples:
        samples = samples[np.round(np.linspace(0, len(x) - 1, n_samples)).astype(np.int64)]
    anchors = _farthest_point(samples, n_anchors, rng)
    for _ in range(n_iter):
        d = np.linalg.norm(anchors[:, None, :] - samples[None, :, :], axis=2)
        w = d <= bandwidth
        cnt = w.sum(axis=1)
        moved = (w.astype(float) @ samples) / np.maximum(cnt, 1)[:, None]
        anchors = np.where(cnt[:, None] > 0, moved, anchors)
    support = (np.linalg.norm(anchors[:, None, :] - samples[None, :, :], axis=2) <= bandwidth).sum(axis=1)
    order = sorted(range(len(anchors)), key=lambda i: (-support[i], i))
    modes: list[np.ndarray] = []
    for i in order:
        if support[i] == 0:
            continue
        if all(np.linalg.norm(anchors[i] - m) > bandwidth / 2 for m in modes):
            modes.append(anchors[i])
    modes_arr = np.array(modes).reshape(-1, x.shape[1])
    if len(modes_arr) == 0:
        return MeanShiftResult(np.full(len(x), -1, dtype=np.int64), modes_arr)
    d = np.linalg.norm(x[:, None, :] - modes_arr[None, :, :], axis=2)
    lab = np.argmin(d, axis=1)
    lab = np.where(d[np.arange(len(x)), lab] <= bandwidth, lab, -1)
    return MeanShiftResult(lab.astype(np.int64), modes_arr)


def mean_shift_masked(features: np.ndarray, mask: np.ndarray, bandwidth: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Cluster the masked pixels of a (D, H, W) or (H, W) feature map.

    Returns a per-pixel cluster map (-1 off-mask or unassigned) and the modes.
    """
    f = np.asarray(features, dtype=float)
    if f.ndim == 2:
        f = f[None]
    mask = np.asarray(mask, dtype=bool)
    out = np.full(mask.shape, -1, dtype=np.int64)
    if not mask.any():
        return out, np.zeros((0, f.shape[0]))
    res = mean_shift(f[:, mask].T, bandwidth, seed=seed)
    out[mask] = res.labels
    return out, res.modes


# ---------------------------------------------------------------- per-pixel geometry

def pixel_orientation(depth: DepthMap, tol: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel V-plane orientation estimated from the same-row neighbours.

    Returns ``(theta_prime, theta)``. The estimate is formed in each pixel's
    own viewing frame, so ``theta_prime`` depends only on neighbouring depths
    and rolls exactly with the image. Where the three centred points are
    not collinear (within ``tol`` times the range) the one-sided tangent on
    the straighter side is used.
    """
    grid = depth.grid
    _, v = grid.angles()
    rho = np.where(depth.valid, depth.values * np.cos(v), np.nan)
    du = grid.du
    c1, s1 = math.cos(du), math.sin(du)
    c2, s2 = math.cos(2 * du), math.sin(2 * du)

    def local(k, cos_k, sin_k):
        r = np.roll(rho, -k, axis=1)
        return r * cos_k, r * sin_k

    px, py = rho, np.zeros_like(rho)
    rx, ry = local(1, c1, s1)
    lx, ly = local(-1, c1, -s1)
    rrx, rry = local(2, c2, s2)
    llx, lly = local(-2, c2, -s2)

    def offline(ax, ay, bx, by, cx, cy):
        # distance of b from the line a-c
        tx, ty = cx - ax, cy - ay
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.abs(tx * (by - ay) - ty * (bx - ax)) / np.hypot(tx, ty)

    res_c = offline(lx, ly, px, py, rx, ry)
    res_r = offline(px, py, rx, ry, rrx, rry)
    res_l = offline(llx, lly, lx, ly, px, py)
    tx, ty = rx - lx, ry - ly
    one_sided = ~(res_c <= tol * rho)
    use_r = one_sided & (res_r < res_l)
    use_l = one_sided & ~use_r
    tx = np.where(use_r, rx - px, np.where(use_l, px - lx, tx))
    ty = np.where(use_r, ry - py, np.where(use_l, py - ly, ty))
    # normal perpendicular to the tangent, pointing away from the camera
    nx, ny = ty, -tx
    flip = nx * px + ny * py < 0
    nx, ny = np.where(flip, -nx, nx), np.where(flip, -ny, ny)
    theta_prime = wrap_angle(np.arctan2(ny, nx))
    u = grid.u_of_col()[None, :]
    theta = wrap_angle(theta_prime + u)
    return theta_prime, theta


def pixel_plane_vectors(depth: DepthMap, theta_map: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel H offset z, V offset o (at the pixel's own theta) and V plane vector field (H, W, 3)."""
    u, v = depth.grid.angles()
    d = np.where(depth.valid, depth.values, np.nan)
    z = d * np.sin(v)
    rho = d * np.cos(v)
    o = rho * np.cos(theta_map - u)
    nv = np.stack([o * np.cos(theta_map), o * np.sin(theta_map), np.zeros_like(o)], axis=-1)
    return z, o, nv


def instance_param_median(mask: np.ndarray, per_pixel_n: np.ndarray, kind: PlaneKind) -> PlaneParam:
    """Component-wise median of the plane vectors under ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty instance mask")
    med = np.median(np.asarray(per_pixel_n)[mask], axis=0)
    if PlaneKind(kind) is PlaneKind.H:
        return PlaneParam.horizontal(float(med[2]))
    theta = math.atan2(med[1], med[0])
    return PlaneParam.vertical(theta, float(math.hypot(med[0], med[1])))


# ---------------------------------------------------------------- pipeline

@dataclass
class SegmentConfig:
    bandwidth_h: float = 0.05
    bandwidth_v: float = 0.05
    min_cc: int | None = None
    seed: int = 0
    features: np.ndarray | None = None  # optional external (D, H, W) map


def _group_representative(theta: np.ndarray, members: np.ndarray) -> float:
    """Circular mean of member orientations; refines the peak bin centre.

    Sums run over sorted values so the result does not depend on pixel order.
    """
    t = theta[members]
    return math.atan2(float(np.sort(np.sin(t)).sum()), float(np.sort(np.cos(t)).sum()))


def dnc_segment(
    pcm: PixelClassMap,
    theta_map: np.ndarray,
    depth: DepthMap,
    cfg: SegmentConfig | None = None,
) -> tuple[InstanceLabelMap, OrientationGroupMap]:
    cfg = cfg or SegmentConfig()
    grid = depth.grid
    if pcm.grid != grid or np.shape(theta_map) != grid.shape:
        raise ValueError("inputs do not share a grid")
    min_cc = cfg.min_cc if cfg.min_cc is not None else grid.scaled_min_cc()
    theta_map = np.asarray(theta_map, dtype=float)
    valid_v = pcm.v_mask & np.isfinite(theta_map)
    hist = build_orientation_histogram(theta_map, valid_v)
    peaks = find_peaks(hist)
    vpcm = PixelClassMap(np.where(pcm.v_mask & ~valid_v, 0, pcm.labels))
    groups = assign_groups(vpcm, theta_map, peaks, grid)

    u, v = grid.angles()
    d = np.where(depth.valid, depth.values, np.nan)
    z = d * np.sin(v)
    rho = d * np.cos(v)
    _, _, per_pixel_v = pixel_plane_vectors(depth, theta_map)
    per_pixel_h = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1)

    if cfg.features is not None:
        feats = np.asarray(cfg.features, dtype=float)
        if feats.ndim == 2:
            feats = feats[None]
        if feats.shape[1:] != grid.shape:
            raise ValueError(f"feature map shape {feats.shape} does not match grid {grid.shape}")
    else:
        feats = None

    out = np.zeros(grid.shape, dtype=np.int64)
    table: dict[int, PlaneParam] = {}
    next_id = 1
    for gid in sorted(groups.table):
        g = groups.table[gid]
        members = (groups.groups == gid) & depth.valid
        if not members.any():
            continue
        if g.kind is PlaneKind.H:
            default_feat, bw, per_pixel = z, cfg.bandwidth_h, per_pixel_h
        else:
            rep = _group_representative(theta_map, members)
            default_feat = rho * np.cos(rep - u)
            bw, per_pixel = cfg.bandwidth_v, per_pixel_v
        f = feats if feats is not None else default_feat
        clusters, modes = mean_shift_masked(f, members, bw, seed=cfg.seed + gid)
        for c in range(len(modes)):
            labels, n = label_wrap(clusters == c)
            sizes = component_sizes(labels, n)
            for cc in range(1, n + 1):
                if sizes[cc] < min_cc:
                    continue
                m = labels == cc
                try:
                    p = instance_param_median(m, per_pixel, g.kind)
                except DegenerateGeometryError:
                    continue
                out[m] = next_id
                table[next_id] = p
                next_id += 1
    return InstanceLabelMap(out, table), groups


def segment_depth(depth: DepthMap, pcm: PixelClassMap, cfg: SegmentConfig | None = None):
    """Convenience: estimate orientations from depth and run :func:`dnc_segment`."""
    _, theta = pixel_orientation(depth)
    return dnc_segment(pcm, theta, depth, cfg)
