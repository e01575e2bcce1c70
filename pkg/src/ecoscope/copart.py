"""Co-part object discovery.

Parts that look alike (descriptor similarity above epsilon) are compared
through their adjacency edges: when two similar parts each have a
neighbour at a cosine-similar offset, and those neighbours are themselves
similar, the part and its neighbour are grouped into one object. Groups
that come to share a part are merged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .part_graph import PartGraph, edge_similarity, part_similarity, similarity_matrix

__all__ = [
    "ObjectCluster",
    "DiscoveryConfig",
    "DiscoveryStats",
    "BudgetExceeded",
    "discover_objects",
    "brute_force_discover",
    "partition",
]

BRUTE_FORCE_MAX_PARTS = 12


@dataclass
class ObjectCluster:
    cluster_id: int
    members: set[int]
    internal_edges: set[tuple[int, int]] = field(default_factory=set)

    def is_connected(self) -> bool:
        if not self.members:
            return False
        adj: dict[int, set[int]] = {m: set() for m in self.members}
        for a, b in self.internal_edges:
            adj[a].add(b)
            adj[b].add(a)
        start = next(iter(self.members))
        seen, stack = {start}, [start]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen == self.members


@dataclass(frozen=True)
class DiscoveryConfig:
    epsilon: float = 0.99
    rng_seed: int = 0
    deterministic_order: bool = True
    magnitude_gate: bool = False
    magnitude_delta: float = 0.1
    comparison_budget: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")


@dataclass
class DiscoveryStats:
    pairwise_comparisons: int = 0
    merges: int = 0
    wall_time: float = 0.0
    aborted: bool = False

    def as_dict(self) -> dict:
        return {
            "pairwise_comparisons": self.pairwise_comparisons,
            "merges": self.merges,
            "wall_time": self.wall_time,
            "aborted": self.aborted,
        }


class BudgetExceeded(RuntimeError):
    def __init__(self, clusters, stats):
        super().__init__(f"comparison budget exceeded after {stats.pairwise_comparisons} comparisons")
        self.clusters = clusters
        self.stats = stats


class _ClusterSet:
    def __init__(self, graph: PartGraph, stats: DiscoveryStats):
        self.graph = graph
        self.stats = stats
        self.clusters: dict[int, ObjectCluster] = {}
        self.owner: dict[int, int] = {}
        self.next_id = 0

    def register(self, i: int, k: int):
        edge = (min(i, k), max(i, k))
        found = sorted({self.owner[p] for p in (i, k) if p in self.owner})
        if not found:
            c = ObjectCluster(self.next_id, {i, k}, {edge})
            self.clusters[c.cluster_id] = c
            self.owner[i] = self.owner[k] = c.cluster_id
            self.next_id += 1
            return
        c = self.clusters[found[0]]
        for p in (i, k):
            # complete adjacency edges between the incoming part and current members
            nbrs = self.graph.neighbors[p]
            for y in c.members:
                if y in nbrs:
                    c.internal_edges.add((min(p, y), max(p, y)))
        c.members |= {i, k}
        c.internal_edges.add(edge)
        self.owner[i] = self.owner[k] = c.cluster_id
        for cid in found[1:]:
            other = self.clusters.pop(cid)
            c.members |= other.members
            c.internal_edges |= other.internal_edges
            for p in other.members:
                self.owner[p] = c.cluster_id
            self.stats.merges += 1

    def result(self) -> list[ObjectCluster]:
        return [self.clusters[c] for c in sorted(self.clusters)]


def discover_objects(graph: PartGraph, config: DiscoveryConfig | None = None):
    """Cluster recurring neighbouring parts into objects.

    Returns ``(clusters, stats)``. Parts left out of every cluster are
    background. Raises :class:`BudgetExceeded` (carrying the partial
    result) when ``comparison_budget`` is set and exceeded.
    """
    config = config or DiscoveryConfig()
    t0 = time.perf_counter()
    stats = DiscoveryStats()
    parts = graph.parts
    M = len(parts)
    eps = config.epsilon
    out = _ClusterSet(graph, stats)
    if M == 0:
        return [], stats

    S = similarity_matrix(np.stack([p.descriptor for p in parts]))
    centroids = np.stack([p.centroid for p in parts])
    nbrs = [sorted(graph.neighbors.get(i, ())) for i in range(M)]
    offsets = [centroids[n] - centroids[i] if n else np.zeros((0, 2)) for i, n in enumerate(nbrs)]

    if config.deterministic_order:
        order = list(range(M))
    else:
        order = [int(x) for x in np.random.default_rng(config.rng_seed).permutation(M)]

    budget = config.comparison_budget
    for i in order:
        stats.pairwise_comparisons += M - 1
        similar = np.flatnonzero(S[i] > eps)
        for j in similar:
            j = int(j)
            if j == i or not nbrs[i] or not nbrs[j]:
                continue
            stats.pairwise_comparisons += len(nbrs[i]) * len(nbrs[j])
            cos = _offset_cosines(offsets[i], offsets[j], config)
            for a, b in zip(*np.nonzero(cos > eps)):
                k, kp = nbrs[i][a], nbrs[j][b]
                if S[k, kp] > eps:
                    out.register(i, k)
        if budget is not None and stats.pairwise_comparisons > budget:
            stats.aborted = True
            stats.wall_time = time.perf_counter() - t0
            raise BudgetExceeded(out.result(), stats)
    stats.wall_time = time.perf_counter() - t0
    return out.result(), stats


def _offset_cosines(a: np.ndarray, b: np.ndarray, config: DiscoveryConfig) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na[:, None] * nb[None, :]
    cos = np.zeros(denom.shape)
    np.divide(a @ b.T, denom, out=cos, where=denom > 0)
    if config.magnitude_gate:
        lo = np.minimum(na[:, None], nb[None, :])
        hi = np.maximum(na[:, None], nb[None, :])
        ratio = np.zeros(denom.shape)
        np.divide(lo, hi, out=ratio, where=hi > 0)
        cos[ratio < 1 - config.magnitude_delta] = 0.0
    return cos


def brute_force_discover(graph: PartGraph, config: DiscoveryConfig | None = None) -> list[ObjectCluster]:
    """Exhaustive reference: link (i, k) for every qualifying (i, j, k, k')
    and return the connected components of the links. Test-scale only."""
    config = config or DiscoveryConfig()
    parts = graph.parts
    M = len(parts)
    if M > BRUTE_FORCE_MAX_PARTS:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_MAX_PARTS} parts, got {M}")
    eps = config.epsilon

    def sim(a, b):
        return part_similarity(parts[a].descriptor, parts[b].descriptor)

    links = set()
    for i in range(M):
        for j in range(M):
            if i == j or sim(i, j) <= eps:
                continue
            for k in graph.neighbors.get(i, ()):
                for kp in graph.neighbors.get(j, ()):
                    es = edge_similarity(
                        graph.offset(i, k), graph.offset(j, kp),
                        magnitude_gate=config.magnitude_gate, delta=config.magnitude_delta,
                    )
                    if es > eps and sim(k, kp) > eps:
                        links.add((min(i, k), max(i, k)))

    adj: dict[int, set[int]] = {}
    for a, b in links:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    clusters, seen = [], set()
    for start in sorted(adj):
        if start in seen:
            continue
        comp, stack = {start}, [start]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in comp:
                    comp.add(nb)
                    stack.append(nb)
        seen |= comp
        edges = {(a, b) for a in comp for b in graph.neighbors.get(a, ()) if a < b and b in comp}
        clusters.append(ObjectCluster(len(clusters), comp, edges))
    return clusters


def partition(clusters) -> frozenset:
    """Cluster membership ignoring ids, for comparisons."""
    return frozenset(frozenset(c.members) for c in clusters)
