"""Vertical plane extraction: 2-point RANSAC on V-pixels, largest connected
component per hypothesis, then border/CC refinement and a least-squares refit."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .components import component_sizes, label_wrap, neighbours
from .panogeom import EPS_OFFSET, DegenerateGeometryError, DepthMap, PlaneParam
from .pixelclass import PixelClassMap

REL_INLIER = 0.05
MAX_INLIER = 0.2  # metres
_BATCH = 64


@dataclass
class RansacConfig:
    iterations: int = 500
    seed: int = 0
    min_cc: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("RANSAC needs at least one iteration")


@dataclass
class VPlaneInstance:
    mask: np.ndarray
    theta: float
    o: float

    @property
    def param(self) -> PlaneParam:
        return PlaneParam.vertical(self.theta, self.o)


def inlier_threshold(o):
    return np.minimum(np.asarray(o) * REL_INLIER, MAX_INLIER)


def fit_v_plane_2pt(p1, p2) -> PlaneParam | None:
    """Vertical plane through two points (only their horizontal projections matter)."""
    a = np.asarray(p1, dtype=float)[:2]
    b = np.asarray(p2, dtype=float)[:2]
    t = b - a
    length = math.hypot(*t)
    if length <= 1e-6:
        return None
    n = np.array([t[1], -t[0]]) / length
    o = float(n @ a)
    if o < 0:
        n, o = -n, -o
    if o <= EPS_OFFSET:
        return None
    return PlaneParam.vertical(math.atan2(n[1], n[0]), o)


def fit_v_plane_lsq(points) -> PlaneParam:
    """Total-least-squares vertical plane through the horizontal projections of ``points``."""
    xy = np.asarray(points, dtype=float).reshape(-1, 3)[:, :2]
    if len(xy) < 2:
        raise DegenerateGeometryError("need at least two points")
    c = xy.mean(axis=0)
    cov = (xy - c).T @ (xy - c)
    w, vecs = np.linalg.eigh(cov)
    if w[1] <= 1e-18:
        raise DegenerateGeometryError("all points project to the same spot")
    n = vecs[:, 0]
    o = float(n @ c)
    if o < 0:
        n, o = -n, -o
    if o <= EPS_OFFSET:
        raise DegenerateGeometryError("fitted line passes through the camera")
    return PlaneParam.vertical(math.atan2(n[1], n[0]), o)


def _ransac(xy: np.ndarray, n_iter: int, rng: np.random.Generator) -> tuple[PlaneParam | None, np.ndarray]:
    """Best 2-point hypothesis over ``xy`` (N, 2); returns it and its inlier mask."""
    n = len(xy)
    pairs = rng.integers(0, n, size=(n_iter, 2))
    cands = [fit_v_plane_2pt(np.append(xy[i], 0.0), np.append(xy[j], 0.0)) for i, j in pairs]
    valid = [(k, p) for k, p in enumerate(cands) if p is not None]
    if not valid:
        return None, np.zeros(n, dtype=bool)
    best_p, best_count = None, -1
    for s in range(0, len(valid), _BATCH):
        chunk = valid[s:s + _BATCH]
        normals = np.array([p.normal[:2] for _, p in chunk])
        offs = np.array([p.offset for _, p in chunk])
        resid = np.abs(xy @ normals.T - offs)
        counts = (resid < inlier_threshold(offs)).sum(axis=0)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count, best_p = int(counts[k]), chunk[k][1]
    inl = np.abs(xy @ best_p.normal[:2] - best_p.offset) < inlier_threshold(best_p.offset)
    return best_p, inl


def _largest_inlier_cc(flat_idx: np.ndarray, shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask.ravel()[flat_idx] = True
    labels, n = label_wrap(mask)
    if n == 0:
        return mask
    sizes = component_sizes(labels, n)
    sizes[0] = -1
    return labels == int(np.argmax(sizes))


def extract_v_planes(
    depth: DepthMap,
    pcm: PixelClassMap,
    cfg: RansacConfig | None = None,
    polish_rounds: int = 5,
) -> list[VPlaneInstance]:
    cfg = cfg or RansacConfig()
    if pcm.grid != depth.grid:
        raise ValueError("depth and class map grids differ")
    min_cc = cfg.min_cc if cfg.min_cc is not None else depth.grid.scaled_min_cc()
    rng = np.random.default_rng(cfg.seed)
    pts = depth.points()
    remaining = pcm.v_mask & depth.valid
    found: list[VPlaneInstance] = []
    while remaining.sum() >= 2:
        idx = np.flatnonzero(remaining)
        xy = pts.reshape(-1, 3)[idx, :2]
        plane, inl = _ransac(xy, cfg.iterations, rng)
        if plane is None:
            break
        cc = _largest_inlier_cc(idx[inl], depth.shape)
        # a 2-point sample is only as good as the band; polish it on the
        # component it explains and re-take the inliers until they settle
        for _ in range(polish_rounds):
            refined = _trimmed_fit(pts[cc], plane)
            inl = np.abs(xy @ refined.normal[:2] - refined.offset) < inlier_threshold(refined.offset)
            new_cc = _largest_inlier_cc(idx[inl], depth.shape)
            plane, settled, cc = refined, np.array_equal(new_cc, cc), new_cc
            if settled:
                break
        if cc.sum() < min_cc:
            break
        found.append(VPlaneInstance(cc, plane.theta, plane.offset))
        remaining &= ~cc
    return found


def _owner_map(instances, shape) -> np.ndarray:
    owner = np.zeros(shape, dtype=np.int64)
    for k, inst in enumerate(instances, start=1):
        owner[inst.mask] = k
    return owner


def _reassign_borders(owner: np.ndarray, pts: np.ndarray, planes: list[PlaneParam], max_sweeps: int) -> np.ndarray:
    """Move border pixels to the neighbouring instance whose plane is nearest, until stable."""
    normals = np.array([[0.0, 0.0]] + [p.normal[:2] for p in planes])
    offs = np.array([0.0] + [p.offset for p in planes])
    xy = pts[..., :2]
    for _ in range(max_sweeps):
        nbrs = neighbours(owner, 0)
        border = np.zeros(owner.shape, dtype=bool)
        for nb in nbrs:
            border |= (owner > 0) & (nb > 0) & (nb != owner)
        if not border.any():
            break
        cur = owner[border]
        pxy = xy[border]
        best = cur.copy()
        best_d = np.abs(np.einsum("ij,ij->i", pxy, normals[cur]) - offs[cur])
        for nb in nbrs:
            cand = nb[border]
            ok = cand > 0
            d = np.full(cand.shape, np.inf)
            d[ok] = np.abs(np.einsum("ij,ij->i", pxy[ok], normals[cand[ok]]) - offs[cand[ok]])
            better = d < best_d
            best[better], best_d[better] = cand[better], d[better]
        if np.array_equal(best, cur):
            break
        owner = owner.copy()
        owner[border] = best
    return owner


def _trimmed_fit(xyz: np.ndarray, plane: PlaneParam, rounds: int = 3) -> PlaneParam:
    """Least-squares refit that drops points far from the current plane.

    The cut is 2.5 robust standard deviations of the residuals, floored at
    1 mm so that noiseless data keeps its exact inliers.
    """
    xy = xyz[:, :2]
    for _ in range(rounds):
        r = np.abs(xy @ np.asarray(plane.normal[:2]) - plane.offset)
        sigma = 1.4826 * float(np.median(r))
        keep = r <= max(2.5 * sigma, 1e-3)
        if keep.sum() < 2:
            break
        try:
            plane = fit_v_plane_lsq(xyz[keep])
        except DegenerateGeometryError:
            break
    return plane


def _fix_fragments(owner: np.ndarray, n_inst: int) -> np.ndarray:
    """Keep each instance's largest CC; hand smaller CCs to the majority neighbouring instance."""
    owner = owner.copy()
    for k in range(1, n_inst + 1):
        labels, n = label_wrap(owner == k)
        if n <= 1:
            continue
        sizes = component_sizes(labels, n)
        sizes[0] = -1
        keep = int(np.argmax(sizes))
        for c in range(1, n + 1):
            if c == keep:
                continue
            frag = labels == c
            votes = np.zeros(n_inst + 1, dtype=np.int64)
            for nb in neighbours(owner, 0):
                adj = frag & (nb != k) & (nb > 0)
                np.add.at(votes, nb[adj], 1)
            votes[k] = 0
            owner[frag] = int(np.argmax(votes)) if votes.max() > 0 else 0
    return owner


def refine_v_planes(
    instances: list[VPlaneInstance],
    depth: DepthMap,
    pcm: PixelClassMap | None = None,
    max_sweeps: int = 64,
) -> list[VPlaneInstance]:
    if not instances:
        return []
    pts = np.nan_to_num(depth.points())
    owner = _owner_map(instances, depth.shape)
    # RANSAC hypotheses are only as good as the inlier band; compare border
    # pixels against trimmed least-squares planes instead
    planes = [_trimmed_fit(pts[i.mask], i.param) for i in instances]
    owner = _reassign_borders(owner, pts, planes, max_sweeps)
    owner = _fix_fragments(owner, len(instances))
    out = []
    for k, plane in enumerate(planes, start=1):
        m = owner == k
        if not m.any():
            continue
        p = _trimmed_fit(pts[m], plane)
        out.append(VPlaneInstance(m, p.theta, p.offset))
    return out
