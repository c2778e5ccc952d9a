"""Connected components on an equirectangular grid.

4-connectivity, the left and right image borders are glued together, the
top and bottom rows are not.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

_FOUR = ndimage.generate_binary_structure(2, 1)


def label_wrap(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Label ``mask`` with seam-aware 4-connectivity.

    Returns ``(labels, count)`` with labels numbered 1..count in raster
    order of each component's first pixel, 0 for background.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_FOUR)
    if n == 0:
        return labels, 0
    left, right = labels[:, 0], labels[:, -1]
    both = (left > 0) & (right > 0)
    if both.any():
        parent = np.arange(n + 1)

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(left[both], right[both]):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(n + 1)])
        labels = roots[labels]
    return _relabel_raster(labels)


def _relabel_raster(labels: np.ndarray) -> tuple[np.ndarray, int]:
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids > 0
    ids, first = ids[keep], first[keep]
    order = ids[np.argsort(first)]
    lut = np.zeros(int(labels.max()) + 1, dtype=np.int64)
    lut[order] = np.arange(1, len(order) + 1)
    return lut[labels], len(order)


def component_sizes(labels: np.ndarray, count: int) -> np.ndarray:
    """Pixel count per component id; index 0 is background."""
    return np.bincount(labels.ravel(), minlength=count + 1)


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Mask of the biggest component (first in raster order on ties)."""
    labels, n = label_wrap(mask)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = component_sizes(labels, n)
    sizes[0] = -1
    return labels == int(np.argmax(sizes))


def remove_small(mask: np.ndarray, min_size: int) -> np.ndarray:
    labels, n = label_wrap(mask)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = component_sizes(labels, n)
    ok = sizes >= min_size
    ok[0] = False
    return ok[labels]


def neighbours(a: np.ndarray, fill) -> list[np.ndarray]:
    """The four neighbour views of ``a`` (up, down, left, right) with wrapping columns.

    Rows past the top/bottom border are filled with ``fill``.
    """
    pad = np.full((1, a.shape[1]), fill, dtype=a.dtype)
    up = np.vstack([pad, a[:-1]])
    down = np.vstack([a[1:], pad])
    left = np.roll(a, 1, axis=1)
    right = np.roll(a, -1, axis=1)
    return [up, down, left, right]
