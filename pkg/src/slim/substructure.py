"""Per-node substructure descriptors from k-hop BFS neighborhoods.

Each node contributes one substructure instance: the multiset of node types
inside its k-hop ball, arranged by one of four layouts (rows of the matrix Z).
Hop distances come from BFS on the adjacency list, not matrix powers, so exact
per-layer shells are available.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

MAX_HOPS = 10


class Variant(str, Enum):
    NODE_DISTRIBUTION = "node_distribution"
    CENTER_EMPHASIS = "center_emphasis"
    LAYER_WISE = "layer_wise"
    WEIGHTED_LAYER_SUM = "weighted_layer_sum"


@dataclass(frozen=True)
class SubstructureConfig:
    hops: int = 3
    variant: Variant = Variant.NODE_DISTRIBUTION
    layer_decay: float = 0.5  # geometric layer weight, weighted_layer_sum only

    def __post_init__(self):
        if not 0 <= self.hops <= MAX_HOPS:
            raise ValueError(f"hops must be in [0, {MAX_HOPS}], got {self.hops}")
        if not 0.0 < self.layer_decay <= 1.0:
            raise ValueError("layer_decay must be in (0, 1]")
        object.__setattr__(self, "variant", Variant(self.variant))

    def feature_width(self, c: int) -> int:
        if self.variant is Variant.CENTER_EMPHASIS:
            return 2 * c
        if self.variant is Variant.LAYER_WISE:
            return self.hops * c
        return c


def bfs_distances(adjacency: np.ndarray, source: int, limit: int) -> np.ndarray:
    """Hop distance from ``source`` to every node, -1 beyond ``limit``."""
    n = adjacency.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    depth = 0
    while frontier and depth < limit:
        depth += 1
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adjacency[u]):
                if dist[v] < 0:
                    dist[v] = depth
                    nxt.append(int(v))
        frontier = nxt
    return dist


def _all_distances(adjacency: np.ndarray, limit: int) -> np.ndarray:
    n = adjacency.shape[0]
    return np.stack([bfs_distances(adjacency, s, limit) for s in range(n)])


def khop_adjacency(adjacency: np.ndarray, k: int) -> np.ndarray:
    """Reachability matrix: entry (p, q) is 1 iff BFS distance <= k.

    Distance zero counts, so the diagonal is all ones for every k >= 0.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    dist = _all_distances(adjacency, k)
    return ((dist >= 0) & (dist <= k)).astype(np.float64)


def exact_layer_adjacency(adjacency: np.ndarray, j: int) -> np.ndarray:
    """Shell matrix: entry (p, q) is 1 iff BFS distance is exactly j >= 1."""
    if j < 1:
        raise ValueError("layer index must be >= 1")
    dist = _all_distances(adjacency, j)
    return (dist == j).astype(np.float64)


@dataclass(frozen=True)
class SubstructureMatrix:
    values: np.ndarray
    variant: Variant
    hops: int

    @property
    def feature_width(self) -> int:
        return self.values.shape[1]


def build_substructures(graph, x: np.ndarray, cfg: SubstructureConfig) -> SubstructureMatrix:
    """Assemble the n x D substructure matrix for one graph (or adjacency).

    node_distribution     A(k) X                      width c
    center_emphasis       [X ; A(k) X]                width 2c
    layer_wise            [L1 X ; ... ; Lk X]         width k*c
    weighted_layer_sum    X + sum_j decay^j Lj X      width c
    where Lj is the exact-j-hop shell matrix.
    """
    adjacency = getattr(graph, "adjacency", graph)
    if x.shape[0] != adjacency.shape[0]:
        raise ValueError("feature matrix and adjacency disagree on node count")
    k, variant = cfg.hops, cfg.variant
    if variant is Variant.LAYER_WISE and k < 1:
        raise ValueError(f"{variant.value} requires hops >= 1")
    dist = _all_distances(adjacency, max(k, 1))
    reach = ((dist >= 0) & (dist <= k)).astype(np.float64)
    if variant is Variant.NODE_DISTRIBUTION:
        z = reach @ x
    elif variant is Variant.CENTER_EMPHASIS:
        z = np.hstack([x, reach @ x])
    elif variant is Variant.LAYER_WISE:
        z = np.hstack([(dist == j).astype(np.float64) @ x for j in range(1, k + 1)])
    else:
        z = x.copy()
        for j in range(1, k + 1):
            z += cfg.layer_decay**j * ((dist == j).astype(np.float64) @ x)
    return SubstructureMatrix(values=z, variant=variant, hops=k)
