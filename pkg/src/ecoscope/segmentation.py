"""Felzenszwalb graph-based segmentation on the 4-connected pixel grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = [
    "SegmentationParams",
    "SegmentLabeling",
    "as_image",
    "felzenszwalb_segment",
    "segment_batch",
]


@dataclass(frozen=True)
class SegmentationParams:
    tau: float = 10.0
    min_size: int = 1
    smoothing_sigma: float = 0.0

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.min_size < 1:
            raise ValueError(f"min_size must be >= 1, got {self.min_size}")
        if not self.smoothing_sigma >= 0:
            raise ValueError(f"smoothing_sigma must be >= 0, got {self.smoothing_sigma}")


@dataclass
class SegmentLabeling:
    labels: np.ndarray  # (H, W) int, values 0..num_parts-1
    num_parts: int


def as_image(image) -> np.ndarray:
    """Validate an RGB raster and return it as an (H, W, 3) uint8 array."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must contain at least one pixel")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("pixel channels must lie in 0..255")
        arr = arr.astype(np.uint8)
    return arr


def _grid_edges(img: np.ndarray):
    """All 4-neighbour edges as (u, v, w) with u < v in row-major index."""
    h, w, _ = img.shape
    idx = np.arange(h * w).reshape(h, w)
    f = img.astype(np.float64)
    us, vs, ws = [], [], []
    if w > 1:
        us.append(idx[:, :-1].ravel())
        vs.append(idx[:, 1:].ravel())
        ws.append(np.sqrt(((f[:, :-1] - f[:, 1:]) ** 2).sum(-1)).ravel())
    if h > 1:
        us.append(idx[:-1, :].ravel())
        vs.append(idx[1:, :].ravel())
        ws.append(np.sqrt(((f[:-1, :] - f[1:, :]) ** 2).sum(-1)).ravel())
    if not us:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    wt = np.concatenate(ws)
    order = np.lexsort((v, u, wt))
    return u[order], v[order], wt[order]


def _find(parent: list[int], x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def felzenszwalb_segment(image, params: SegmentationParams | None = None) -> SegmentLabeling:
    """Segment an RGB image into 4-connected parts.

    Edges are visited in ascending RGB-distance order (ties by endpoint
    index) and two components merge when the edge weight does not exceed
    ``min(Int(C) + tau / |C|)`` over both sides. Components smaller than
    ``min_size`` are then absorbed across their cheapest boundary edge.
    Labels are numbered in first-pixel scan order.
    """
    params = params or SegmentationParams()
    img = as_image(image)
    if params.smoothing_sigma > 0:
        img = ndimage.gaussian_filter(
            img.astype(np.float64), sigma=(params.smoothing_sigma, params.smoothing_sigma, 0)
        )
    h, w = img.shape[:2]
    n = h * w
    us, vs, ws = _grid_edges(img)
    u_list, v_list, w_list = us.tolist(), vs.tolist(), ws.tolist()

    parent = list(range(n))
    size = [1] * n
    internal = [0.0] * n
    tau = params.tau
    inf_tau = math.isinf(tau)

    for a, b, wt in zip(u_list, v_list, w_list):
        ra, rb = _find(parent, a), _find(parent, b)
        if ra == rb:
            continue
        if inf_tau:
            ok = True
        else:
            ok = wt <= min(internal[ra] + tau / size[ra], internal[rb] + tau / size[rb])
        if ok:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            # edges arrive in ascending order, so wt is the largest merged weight
            internal[ra] = max(internal[ra], internal[rb], wt)

    if params.min_size > 1:
        for a, b in zip(u_list, v_list):
            ra, rb = _find(parent, a), _find(parent, b)
            if ra != rb and (size[ra] < params.min_size or size[rb] < params.min_size):
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]

    roots = np.fromiter((_find(parent, i) for i in range(n)), dtype=np.int64, count=n)
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    # renumber by first occurrence in scan order
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    labels = rank[inverse].reshape(h, w)
    return SegmentLabeling(labels=labels, num_parts=len(first))


def segment_batch(images, params: SegmentationParams | None = None) -> list[SegmentLabeling]:
    return [felzenszwalb_segment(img, params) for img in images]
