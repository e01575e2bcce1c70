"""Parts, centroid-to-boundary shape descriptors and the graph of parts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .segmentation import SegmentLabeling

__all__ = [
    "DescriptorParams",
    "Part",
    "SpatialEdge",
    "PartGraph",
    "boundary_pixels",
    "sample_shape_descriptor",
    "shape_descriptor",
    "extract_parts",
    "part_similarity",
    "similarity_matrix",
    "edge_similarity",
    "build_part_graph",
    "adjacent_label_pairs",
]


@dataclass(frozen=True)
class DescriptorParams:
    K: int = 64
    epsilon: float = 0.99

    def __post_init__(self):
        if self.K < 3:
            raise ValueError(f"K must be >= 3, got {self.K}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")


@dataclass
class Part:
    part_id: int
    image_index: int
    pixels: np.ndarray  # (n, 2) int (row, col)
    centroid: np.ndarray  # (2,) float
    descriptor: np.ndarray  # (K, 2) float
    color: np.ndarray | None = None  # mean RGB

    @property
    def size(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class SpatialEdge:
    i: int
    j: int
    offset: tuple[float, float]  # centroid_j - centroid_i
    adjacent: bool


@dataclass
class PartGraph:
    parts: list[Part]
    neighbors: dict[int, set[int]] = field(default_factory=dict)

    @cached_property
    def edges_all(self) -> list[SpatialEdge]:
        """Every same-image pair (i < j), labelled with its centroid offset."""
        by_image: dict[int, list[int]] = {}
        for p in self.parts:
            by_image.setdefault(p.image_index, []).append(p.part_id)
        edges = []
        for ids in by_image.values():
            for i, j in combinations(sorted(ids), 2):
                off = self.parts[j].centroid - self.parts[i].centroid
                edges.append(SpatialEdge(i, j, (float(off[0]), float(off[1])), j in self.neighbors[i]))
        return edges

    @property
    def edges_adj(self) -> list[SpatialEdge]:
        out = []
        for i in sorted(self.neighbors):
            for j in sorted(self.neighbors[i]):
                if i < j:
                    off = self.offset(i, j)
                    out.append(SpatialEdge(i, j, (float(off[0]), float(off[1])), True))
        return out

    def offset(self, i: int, j: int) -> np.ndarray:
        """Centroid offset from part ``i`` to part ``j``."""
        return self.parts[j].centroid - self.parts[i].centroid

    def degree(self, i: int) -> int:
        return len(self.neighbors.get(i, ()))

    def max_degree(self) -> int:
        return max((len(v) for v in self.neighbors.values()), default=0)

    def average_degree(self, image_index: int | None = None) -> float:
        ids = [p.part_id for p in self.parts if image_index is None or p.image_index == image_index]
        if not ids:
            return 0.0
        return sum(self.degree(i) for i in ids) / len(ids)


def _as_pixels(pixels) -> np.ndarray:
    arr = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(arr) == 0:
        raise ValueError("part has no pixels")
    return arr


def _exact_offsets(pixels: np.ndarray):
    """Integer offsets scaled by the pixel count, so they are translation-exact."""
    n = len(pixels)
    return pixels * n - pixels.sum(axis=0), n


def boundary_pixels(pixels) -> np.ndarray:
    """Part pixels with at least one 4-neighbour outside the part.

    Ordered by ascending polar angle of (pixel - centroid) measured from the
    +col axis, then by radius, then by (row, col).
    """
    pix = _as_pixels(pixels)
    lo = pix.min(axis=0) - 1
    dims = pix.max(axis=0) - lo + 2
    occ = np.zeros(tuple(dims), dtype=bool)
    local = pix - lo
    occ[local[:, 0], local[:, 1]] = True
    r, c = local[:, 0], local[:, 1]
    interior = occ[r - 1, c] & occ[r + 1, c] & occ[r, c - 1] & occ[r, c + 1]
    bnd = pix[~interior]

    scaled, _ = _exact_offsets(pix)
    scaled = scaled[~interior]
    dr, dc = scaled[:, 0], scaled[:, 1]
    g = np.gcd(dr, dc)
    g[g == 0] = 1
    angle = np.mod(np.arctan2(dr // g, dc // g), 2 * math.pi)
    radius2 = dr * dr + dc * dc
    order = np.lexsort((bnd[:, 1], bnd[:, 0], radius2, angle))
    return bnd[order]


def sample_shape_descriptor(pixels, K: int = 64) -> np.ndarray:
    """K vectors from the centroid to angularly sampled boundary pixels."""
    pix = _as_pixels(pixels)
    bnd = boundary_pixels(pix)
    b = len(bnd)
    k = np.arange(K)
    if b >= K:
        idx = np.floor(k * b / K + 0.5).astype(np.int64)
    else:
        idx = k % b
    n = len(pix)
    scaled = bnd[idx] * n - pix.sum(axis=0)
    return scaled.astype(np.float64) / n


shape_descriptor = sample_shape_descriptor


def _normalize(desc: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(desc, axis=-1, keepdims=True)
    out = np.zeros_like(desc, dtype=np.float64)
    np.divide(desc, norms, out=out, where=norms > 0)
    return out


def part_similarity(v_i, v_j) -> float:
    """Mean index-aligned cosine similarity of two descriptors."""
    a = np.asarray(v_i, dtype=np.float64)
    b = np.asarray(v_j, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor shapes differ: {a.shape} vs {b.shape}")
    return float((_normalize(a) * _normalize(b)).sum(-1).mean())


def similarity_matrix(descs_a, descs_b=None) -> np.ndarray:
    """Pairwise part_similarity between two stacks of (K, 2) descriptors."""
    a = _normalize(np.asarray(descs_a, dtype=np.float64))
    b = a if descs_b is None else _normalize(np.asarray(descs_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        return np.zeros((len(a), len(b)))
    K = a.shape[1]
    return a.reshape(len(a), -1) @ b.reshape(len(b), -1).T / K


def edge_similarity(offset_a, offset_b, magnitude_gate: bool = False, delta: float = 0.1) -> float:
    """Cosine between two centroid offsets (0 for a zero-length offset).

    With the magnitude gate on, pairs whose length ratio min/max falls
    below ``1 - delta`` score 0.
    """
    a = np.asarray(offset_a, dtype=np.float64)
    b = np.asarray(offset_b, dtype=np.float64)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        return 0.0
    if magnitude_gate and min(na, nb) / max(na, nb) < 1 - delta:
        return 0.0
    return float(a @ b / (na * nb))


def adjacent_label_pairs(labels: np.ndarray) -> set[tuple[int, int]]:
    """Label pairs (a < b) sharing at least one 4-neighbouring pixel pair."""
    pairs = []
    for x, y in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = x != y
        if diff.any():
            a, b = x[diff], y[diff]
            pairs.append(np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1))
    if not pairs:
        return set()
    uniq = np.unique(np.concatenate(pairs), axis=0)
    return {(int(a), int(b)) for a, b in uniq}


def extract_parts(
    labeling: SegmentLabeling,
    image_index: int = 0,
    K: int = 64,
    image=None,
    first_id: int = 0,
) -> list[Part]:
    """One Part per label, with centroid, descriptor and (optionally) mean colour."""
    labels = np.asarray(labeling.labels)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(labeling.num_parts + 1))
    w = labels.shape[1]
    rgb = None if image is None else np.asarray(image).reshape(-1, 3).astype(np.float64)
    parts = []
    for lab in range(labeling.num_parts):
        idx = order[bounds[lab]:bounds[lab + 1]]
        pix = np.stack([idx // w, idx % w], axis=1)
        color = None if rgb is None else rgb[idx].mean(axis=0)
        parts.append(
            Part(
                part_id=first_id + lab,
                image_index=image_index,
                pixels=pix,
                centroid=pix.mean(axis=0),
                descriptor=sample_shape_descriptor(pix, K),
                color=color,
            )
        )
    return parts


def _pixel_adjacency(parts: list[Part]) -> set[tuple[int, int]]:
    if not parts:
        return set()
    allpix = np.concatenate([p.pixels for p in parts])
    lo = allpix.min(axis=0)
    shape = tuple(allpix.max(axis=0) - lo + 1)
    grid = np.full(shape, -1, dtype=np.int64)
    for p in parts:
        local = p.pixels - lo
        grid[local[:, 0], local[:, 1]] = p.part_id
    out = set()
    for x, y in ((grid[:, :-1], grid[:, 1:]), (grid[:-1, :], grid[1:, :])):
        m = (x != y) & (x >= 0) & (y >= 0)
        for a, b in zip(x[m].tolist(), y[m].tolist()):
            out.add((min(a, b), max(a, b)))
    return out


def build_part_graph(parts: list[Part], adjacency: set[tuple[int, int]] | None = None) -> PartGraph:
    """Full same-image edge set with centroid offsets plus adjacency flags.

    ``parts`` must be indexed by ``part_id`` (``parts[i].part_id == i``).
    Adjacency is derived from 4-neighbour pixel contact unless supplied.
    """
    for i, p in enumerate(parts):
        if p.part_id != i:
            raise ValueError(f"part at position {i} has part_id {p.part_id}")
    by_image: dict[int, list[int]] = {}
    for p in parts:
        by_image.setdefault(p.image_index, []).append(p.part_id)

    if adjacency is None:
        adjacency = set()
        for ids in by_image.values():
            adjacency |= _pixel_adjacency([parts[i] for i in ids])

    neighbors: dict[int, set[int]] = {p.part_id: set() for p in parts}
    for a, b in adjacency:
        if parts[a].image_index != parts[b].image_index:
            raise ValueError(f"adjacent parts {a}, {b} lie in different images")
        neighbors[a].add(b)
        neighbors[b].add(a)

    return PartGraph(parts=parts, neighbors=neighbors)
