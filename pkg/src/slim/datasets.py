"""Parsing of TU-format graph classification benchmarks and CV fold planning.

TU format (plain text, one directory per dataset):
  <name>_A.txt               "i, j" edge endpoints, 1-indexed, both directions
  <name>_graph_indicator.txt graph id (1-indexed) of every node, one per line
  <name>_graph_labels.txt    one class label per graph
  <name>_node_labels.txt     one categorical label per node (optional)

Loaded graphs are immutable value objects; a bundle may be shared freely
across workers.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

# graphs without a node-labels file fall back to degree labels, clamped here
DEGREE_LABEL_CAP = 10


class DatasetError(Exception):
    """A dataset directory is missing or unreadable."""


class ParseError(DatasetError):
    """A dataset file exists but its content is malformed."""


@dataclass(frozen=True)
class Graph:
    """One undirected graph: adjacency, categorical node labels, class label."""

    adjacency: np.ndarray
    node_labels: np.ndarray
    class_label: int

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    def validate(self):
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("adjacency must be a square matrix with >= 1 node")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.isin(a, (0.0, 1.0)).all():
            raise ValueError("adjacency must be binary")
        if self.node_labels.shape != (a.shape[0],) or np.any(self.node_labels < 0):
            raise ValueError("node_labels must be one non-negative int per node")


@dataclass(frozen=True)
class DatasetBundle:
    name: str
    graphs: list[Graph]
    node_label_count: int
    class_count: int

    def __len__(self):
        return len(self.graphs)

    def class_labels(self) -> np.ndarray:
        return np.array([g.class_label for g in self.graphs], dtype=np.int64)


@dataclass(frozen=True)
class FoldPlan:
    fold_count: int
    assignments: np.ndarray  # graph index -> fold index
    seed: int

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) for one fold."""
        val = self.fold_indices(fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, val


def _read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.strip() for line in fh.read().splitlines()]


def _require(path: str):
    if not os.path.isfile(path):
        raise DatasetError(f"missing required dataset file: {path}")
    return path


def _int_column(path: str) -> np.ndarray:
    """One integer per non-empty line."""
    values = []
    for line_no, line in enumerate(_read_lines(path), start=1):
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise ParseError(f"{path} line {line_no}: expected an integer, got {line!r}") from None
    return np.array(values, dtype=np.int64)


def _densify(raw: np.ndarray) -> np.ndarray:
    """Map arbitrary integer labels onto a contiguous range starting at 0."""
    values = np.unique(raw)
    lookup = {int(v): i for i, v in enumerate(values)}
    return np.array([lookup[int(v)] for v in raw], dtype=np.int64)


def load_tu_dataset(root_path: str, name: str) -> DatasetBundle:
    """Load one TU-format dataset from ``root_path/name``.

    Edges are symmetrized; duplicate directed pairs and self-loops are dropped
    (with a warning stating how many). Node and class labels are densified to
    contiguous 0-based ranges.
    """
    base = os.path.join(root_path, name)
    if not os.path.isdir(base):
        raise DatasetError(f"dataset directory not found: {base}")
    prefix = os.path.join(base, name)

    indicator = _int_column(_require(f"{prefix}_graph_indicator.txt"))
    raw_class = _int_column(_require(f"{prefix}_graph_labels.txt"))
    n_graphs = len(raw_class)
    n_nodes = len(indicator)

    if n_nodes == 0 or indicator.min() < 1 or indicator.max() > n_graphs:
        raise ParseError(f"graph indicator out of range in {prefix}_graph_indicator.txt")
    counts = np.bincount(indicator, minlength=n_graphs + 1)[1 : n_graphs + 1]
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0]) + 1
        raise ParseError(f"graph {empty} has zero nodes in {prefix}_graph_indicator.txt")

    # node id -> (graph index, local index), robust to interleaved indicators
    offsets = np.zeros(n_graphs + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    order = np.argsort(indicator, kind="stable")
    local_index = np.empty(n_nodes, dtype=np.int64)
    local_index[order] = np.arange(n_nodes) - offsets[indicator[order] - 1]

    adj = [np.zeros((c, c), dtype=np.float64) for c in counts]
    duplicates = self_loops = 0
    seen: set[tuple[int, int]] = set()
    for line_no, line in enumerate(_read_lines(_require(f"{prefix}_A.txt")), start=1):
        if not line:
            continue
        try:
            left, right = line.split(",")
            u, v = int(left), int(right)
        except ValueError:
            raise ParseError(f"{prefix}_A.txt line {line_no}: expected 'i, j', got {line!r}") from None
        if not (1 <= u <= n_nodes and 1 <= v <= n_nodes):
            raise ParseError(f"{prefix}_A.txt line {line_no}: edge endpoint {max(u, v)} unknown")
        if indicator[u - 1] != indicator[v - 1]:
            raise ParseError(f"{prefix}_A.txt line {line_no}: edge joins two different graphs")
        if u == v:
            self_loops += 1
            continue
        if (u, v) in seen:
            duplicates += 1
            continue
        seen.add((u, v))
        g = indicator[u - 1] - 1
        adj[g][local_index[u - 1], local_index[v - 1]] = 1.0
        adj[g][local_index[v - 1], local_index[u - 1]] = 1.0
    if duplicates or self_loops:
        warnings.warn(
            f"{name}: dropped {duplicates} duplicate edge(s) and {self_loops} self-loop(s)",
            stacklevel=2,
        )

    node_label_path = f"{prefix}_node_labels.txt"
    if os.path.isfile(node_label_path):
        raw_node = _int_column(node_label_path)
        if len(raw_node) != n_nodes:
            raise ParseError(f"{node_label_path}: {len(raw_node)} labels for {n_nodes} nodes")
    else:
        degrees = np.concatenate([a.sum(axis=1) for a in adj])
        raw_node = np.minimum(degrees, DEGREE_LABEL_CAP - 1).astype(np.int64)

    node_labels = _densify(raw_node)
    class_labels = _densify(raw_class)

    graphs = []
    for g in range(n_graphs):
        members = order[offsets[g] : offsets[g + 1]]
        graph = Graph(adj[g], node_labels[members].copy(), int(class_labels[g]))
        graph.validate()
        graphs.append(graph)
    return DatasetBundle(
        name=name,
        graphs=graphs,
        node_label_count=int(node_labels.max()) + 1,
        class_count=int(class_labels.max()) + 1,
    )


def save_tu_dataset(bundle: DatasetBundle, root_path: str, name: str | None = None):
    """Write a bundle back to TU format (1-indexed, both edge directions)."""
    name = bundle.name if name is None else name
    base = os.path.join(root_path, name)
    os.makedirs(base, exist_ok=True)
    prefix = os.path.join(base, name)
    edges, indicator, node_labels = [], [], []
    offset = 0
    for gi, g in enumerate(bundle.graphs, start=1):
        rows, cols = np.nonzero(g.adjacency)
        edges.extend((offset + r + 1, offset + c + 1) for r, c in zip(rows, cols))
        indicator.extend([gi] * g.node_count)
        node_labels.extend(int(v) for v in g.node_labels)
        offset += g.node_count
    with open(f"{prefix}_A.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{u}, {v}\n" for u, v in edges)
    with open(f"{prefix}_graph_indicator.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\n" for i in indicator)
    with open(f"{prefix}_graph_labels.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{g.class_label}\n" for g in bundle.graphs)
    with open(f"{prefix}_node_labels.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{v}\n" for v in node_labels)


def one_hot_features(g: Graph, c: int) -> np.ndarray:
    """n x c one-hot node-type matrix."""
    if np.any(g.node_labels >= c) or np.any(g.node_labels < 0):
        raise ValueError(f"node label out of range [0, {c})")
    x = np.zeros((g.node_count, c), dtype=np.float64)
    x[np.arange(g.node_count), g.node_labels] = 1.0
    return x


def make_folds(bundle: DatasetBundle, fold_count: int = 10, seed: int = 0) -> FoldPlan:
    """Deterministic stratified fold assignment.

    Shuffled per-class blocks are dealt round-robin with a fold cursor that
    carries over between classes, which keeps both the per-class and the
    global fold sizes within one of each other.
    """
    n = len(bundle.graphs)
    if fold_count < 2:
        raise ValueError("fold_count must be at least 2")
    if fold_count > n:
        raise ValueError(f"fold_count {fold_count} exceeds graph count {n}")
    labels = bundle.class_labels()
    rng = np.random.default_rng(seed)
    assignments = np.full(n, -1, dtype=np.int64)
    cursor = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < fold_count:
            warnings.warn(
                f"class {cls} has {len(members)} graphs < {fold_count} folds; "
                "stratification relaxed",
                stacklevel=2,
            )
        members = rng.permutation(members)
        for idx in members:
            assignments[idx] = cursor
            cursor = (cursor + 1) % fold_count
    return FoldPlan(fold_count=fold_count, assignments=assignments, seed=seed)
