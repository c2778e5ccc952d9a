from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panogeom import EPS_RAY, ImageGrid, PlaneParam, unit_rays


@dataclass
class InstanceLabelMap:
    """Per-pixel plane-instance ids (0 = none) and the id -> plane table."""

    labels: np.ndarray
    table: dict[int, PlaneParam] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.grid = ImageGrid.from_shape(self.labels.shape)
        missing = set(np.unique(self.labels).tolist()) - {0} - set(self.table)
        if missing:
            raise ValueError(f"label ids without plane parameters: {sorted(missing)}")

    @property
    def ids(self) -> list[int]:
        return sorted(i for i in np.unique(self.labels).tolist() if i != 0)

    def mask(self, i: int) -> np.ndarray:
        return self.labels == i

    def planar_depth(self) -> np.ndarray:
        """Depth rendered from each pixel's own plane; NaN off-plane or on misses."""
        rays = unit_rays(self.grid)
        out = np.full(self.grid.shape, np.nan)
        for i in self.ids:
            m = self.labels == i
            n = self.table[i].vec
            denom = rays[m] @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                d = (n @ n) / denom
            out[m] = np.where(denom > EPS_RAY, d, np.nan)
        return out

    def relabeled(self) -> "InstanceLabelMap":
        """Compact ids to 1..K in raster order of first appearance."""
        flat = self.labels.ravel()
        ids, first = np.unique(flat, return_index=True)
        keep = ids > 0
        order = ids[keep][np.argsort(first[keep])]
        lut = {int(old): new for new, old in enumerate(order, start=1)}
        remap = np.zeros(int(self.labels.max(initial=0)) + 1, dtype=np.int64)
        for old, new in lut.items():
            remap[old] = new
        return InstanceLabelMap(remap[self.labels], {lut[o]: self.table[o] for o in lut})


def coverage(labels: InstanceLabelMap, depth, tol: float = 0.05) -> float:
    """Share of valid pixels lying in an instance whose planar depth is within ``tol`` of the observed depth."""
    pd = labels.planar_depth()
    with np.errstate(invalid="ignore"):
        ok = depth.valid & (labels.labels > 0) & (np.abs(pd - depth.values) <= tol)
    n = int(depth.valid.sum())
    return float(ok.sum()) / n if n else 0.0

