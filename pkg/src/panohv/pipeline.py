"""End-to-end drivers shared by the CLI and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .extract_h import extract_h_planes, refine_h_planes
from .extract_v import RansacConfig, extract_v_planes, refine_v_planes
from .labels import InstanceLabelMap, coverage
from .panogeom import DepthMap
from .pixelclass import PixelClassMap, cc_cleanup, classify_pixels
from .segment import SegmentConfig, dnc_segment, pixel_orientation


@dataclass
class ExtractResult:
    labels: InstanceLabelMap
    pcm: PixelClassMap
    n_h: int
    n_v: int
    coverage: float
    meta: dict = field(default_factory=dict)


def derive_seed(seed: int, stage: str) -> int:
    """Stable per-stage seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, sum(ord(c) << (8 * i) for i, c in enumerate(stage))]).generate_state(1)[0])


def extract_planes(depth: DepthMap, seed: int = 0, ransac_iters: int = 500, min_cc: int | None = None) -> ExtractResult:
    """classify -> cleanup -> H extraction -> V extraction -> refinement of both."""
    min_cc = min_cc if min_cc is not None else depth.grid.scaled_min_cc()
    pcm = cc_cleanup(classify_pixels(depth), min_cc)
    hs = refine_h_planes(extract_h_planes(depth, pcm, min_cc), depth, pcm)
    cfg = RansacConfig(iterations=ransac_iters, seed=derive_seed(seed, "ransac"), min_cc=min_cc)
    vs = refine_v_planes(extract_v_planes(depth, pcm, cfg), depth, pcm)
    out = np.zeros(depth.shape, dtype=np.int64)
    table = {}
    for k, inst in enumerate(hs + vs, start=1):
        out[inst.mask] = k
        table[k] = inst.param
    labels = InstanceLabelMap(out, table)
    meta = {"seed": seed, "ransac_seed": cfg.seed, "ransac_iters": ransac_iters, "min_cc": min_cc}
    return ExtractResult(labels, pcm, len(hs), len(vs), coverage(labels, depth), meta)


def segment(depth: DepthMap, seed: int = 0, bandwidth_h: float = 0.05, bandwidth_v: float = 0.05,
            min_cc: int | None = None, features: np.ndarray | None = None):
    min_cc = min_cc if min_cc is not None else depth.grid.scaled_min_cc()
    pcm = cc_cleanup(classify_pixels(depth), min_cc)
    _, theta = pixel_orientation(depth)
    cfg = SegmentConfig(bandwidth_h, bandwidth_v, min_cc, derive_seed(seed, "meanshift"), features)
    labels, groups = dnc_segment(pcm, theta, depth, cfg)
    meta = {"seed": seed, "meanshift_seed": cfg.seed, "bandwidth_h": bandwidth_h, "bandwidth_v": bandwidth_v,
            "min_cc": min_cc, "features": features is not None}
    return labels, groups, pcm, meta
