"""Segmentation and reconstruction quality metrics for plane instance maps.

Segmentation scores (ARI, VI, SC) are computed on ground-truth planar pixels
only; a prediction id of 0 there counts as one extra "unassigned" cluster.
Plane matching for recall is best-IoU per ground-truth plane and a single
predicted plane may be matched by several ground-truth planes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .labels import InstanceLabelMap

RECALL_THRESHOLDS = (0.05, 0.10, 0.20, 0.30, 0.60)
IOU_MIN = 0.5


def _as_labels(x) -> np.ndarray:
    return x.labels if isinstance(x, InstanceLabelMap) else np.asarray(x)


def contingency(gt, pred) -> np.ndarray:
    """Joint count table over pixels with a nonzero ground-truth id."""
    g, p = _as_labels(gt), _as_labels(pred)
    if g.shape != p.shape:
        raise ValueError("label maps differ in shape")
    region = g != 0
    if not region.any():
        raise ValueError("ground truth has no labelled pixels")
    _, gi = np.unique(g[region], return_inverse=True)
    _, pi = np.unique(p[region], return_inverse=True)
    table = np.zeros((gi.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (gi, pi), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2


def ari(gt, pred) -> float:
    t = contingency(gt, pred)
    n = t.sum()
    sum_ij = _comb2(t).sum()
    sum_a = _comb2(t.sum(axis=1)).sum()
    sum_b = _comb2(t.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n) if n > 1 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all-one-cluster or all-singletons): perfect agreement
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def voi(gt, pred) -> float:
    """Variation of information, natural log."""
    t = contingency(gt, pred).astype(np.float64)
    n = t.sum()
    pij = t / n
    pi = pij.sum(axis=1, keepdims=True)
    pj = pij.sum(axis=0, keepdims=True)
    nz = pij > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        h_g_given_p = -np.sum(pij[nz] * np.log((pij / pj)[nz]))
        h_p_given_g = -np.sum(pij[nz] * np.log((pij / pi)[nz]))
    return float(max(h_g_given_p + h_p_given_g, 0.0))


def seg_covering(gt, pred) -> float:
    t = contingency(gt, pred).astype(np.float64)
    # predicted region sizes over the evaluation region only
    size_g = t.sum(axis=1)
    size_p = t.sum(axis=0)
    union = size_g[:, None] + size_p[None, :] - t
    iou = t / union
    return float(np.sum(size_g * iou.max(axis=1)) / t.sum())


@dataclass
class RecallCurve:
    thresholds: tuple[float, ...] = RECALL_THRESHOLDS
    per_plane: list[float] = field(default_factory=list)
    per_pixel: list[float] = field(default_factory=list)
    n_planes: int = 0
    n_pixels: int = 0

    @property
    def plane_mean(self) -> float:
        return float(np.mean(self.per_plane))

    @property
    def pixel_mean(self) -> float:
        return float(np.mean(self.per_pixel))


@dataclass
class PlaneMatch:
    gt_id: int
    pred_id: int  # 0 when nothing overlaps
    iou: float
    discrepancy: float  # mean |planar depth difference| over the overlap, inf if none
    pixels: int


def match_planes(gt: InstanceLabelMap, pred: InstanceLabelMap, gt_depth: np.ndarray | None = None) -> list[PlaneMatch]:
    """Best-IoU prediction for each ground-truth plane with its depth discrepancy.

    ``gt_depth`` is the reference planar depth; by default it is rendered
    from the ground-truth plane parameters.
    """
    if gt.labels.shape != pred.labels.shape:
        raise ValueError("label maps differ in shape")
    ref = gt.planar_depth() if gt_depth is None else np.asarray(gt_depth, dtype=float)
    pred_depth = pred.planar_depth()
    out = []
    for g in gt.ids:
        gm = gt.labels == g
        ids, inter = np.unique(pred.labels[gm], return_counts=True)
        best = PlaneMatch(g, 0, 0.0, float("inf"), int(gm.sum()))
        for pid, k in zip(ids, inter):
            if pid == 0:
                continue
            union = gm.sum() + (pred.labels == pid).sum() - k
            iou = k / union
            if iou > best.iou:
                ov = gm & (pred.labels == pid)
                diff = np.abs(pred_depth[ov] - ref[ov])
                disc = float(np.mean(diff)) if np.all(np.isfinite(diff)) else float("inf")
                best = PlaneMatch(g, int(pid), float(iou), disc, int(gm.sum()))
        out.append(best)
    return out


def plane_pixel_recall(gt: InstanceLabelMap, pred: InstanceLabelMap, gt_depth: np.ndarray | None = None) -> RecallCurve:
    matches = match_planes(gt, pred, gt_depth)
    if not matches:
        raise ValueError("ground truth has no planes")
    return recall_from_matches(matches)


def recall_from_matches(matches: list[PlaneMatch]) -> RecallCurve:
    total_px = sum(m.pixels for m in matches)
    per_plane, per_pixel = [], []
    for t in RECALL_THRESHOLDS:
        hit = [m for m in matches if m.iou > IOU_MIN and m.discrepancy <= t]
        per_plane.append(len(hit) / len(matches))
        per_pixel.append(sum(m.pixels for m in hit) / total_px)
    return RecallCurve(RECALL_THRESHOLDS, per_plane, per_pixel, len(matches), total_px)


def pooled_recall(match_lists: list[list[PlaneMatch]]) -> RecallCurve:
    """Dataset-wide recall pooling planes from every image."""
    return recall_from_matches([m for ms in match_lists for m in ms])


def depth_metrics(gt_depth, pred_depth, mask) -> tuple[float, float, float]:
    """(mean relative error, mean abs log10 error, RMSE) over ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty evaluation mask")
    g = np.asarray(gt_depth, dtype=float)[mask]
    p = np.asarray(pred_depth, dtype=float)[mask]
    if not (np.all(g > 0) and np.all(p > 0)):
        raise ValueError("depths under the mask must be positive")
    rel = float(np.mean(np.abs(p - g) / g))
    log10 = float(np.mean(np.abs(np.log10(p) - np.log10(g))))
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    return rel, log10, rmse


@dataclass
class MetricsReport:
    ari: float
    vi: float
    sc: float
    recall: RecallCurve
    rel: float
    log10: float
    rmse: float

    def to_dict(self) -> dict:
        d = {"ari": self.ari, "vi": self.vi, "sc": self.sc}
        for t, r in zip(self.recall.thresholds, self.recall.per_plane):
            d[f"recall_plane@{round(t * 100)}cm"] = r
        for t, r in zip(self.recall.thresholds, self.recall.per_pixel):
            d[f"recall_pixel@{round(t * 100)}cm"] = r
        d["recall_plane_mean"] = self.recall.plane_mean
        d["recall_pixel_mean"] = self.recall.pixel_mean
        d.update(rel=self.rel, log10=self.log10, rmse=self.rmse)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(gt: InstanceLabelMap, pred: InstanceLabelMap, gt_depth: np.ndarray | None = None) -> MetricsReport:
    """Full report. Depth errors use pixels planar in both maps where both depths are defined."""
    ref = gt.planar_depth() if gt_depth is None else np.asarray(gt_depth, dtype=float)
    pd = pred.planar_depth()
    with np.errstate(invalid="ignore"):
        mask = (gt.labels > 0) & (pred.labels > 0) & np.isfinite(pd) & np.isfinite(ref) & (ref > 0)
    if mask.any():
        rel, lg, rmse = depth_metrics(ref, pd, mask)
    else:
        rel = lg = rmse = float("nan")
    return MetricsReport(
        ari=ari(gt, pred),
        vi=voi(gt, pred),
        sc=seg_covering(gt, pred),
        recall=plane_pixel_recall(gt, pred, ref),
        rel=rel,
        log10=lg,
        rmse=rmse,
    )
