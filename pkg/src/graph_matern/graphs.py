"""Weighted undirected graphs and their Laplacians.

Graphs are stored as a canonical edge set (u < v, one entry per pair,
strictly positive weights). Laplacians come in two kinds:

* ``"unnormalized"``:   L = D - W
* ``"sym_normalized"``: D^{-1/2} (D - W) D^{-1/2}, with the convention that
  isolated nodes get a zero (not infinite) scaling entry, so their diagonal
  is 0 and they contribute null directions.

Both are exactly symmetric by construction (the sparse structure is built
symmetrically, so L != L.T has zero stored entries).
"""

import io
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

__all__ = [
    "WeightedGraph",
    "LaplacianOperator",
    "parse_edge_list",
    "read_edge_list",
    "read_node_id_map",
    "build_laplacian",
    "connected_components",
]

LAPLACIAN_KINDS = ("unnormalized", "sym_normalized")


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with positive edge weights.

    ``edges`` is a tuple of (u, v, w) with u < v and at most one entry per
    unordered pair. Nodes are 0..node_count-1; isolated nodes are allowed.
    """

    node_count: int
    edges: tuple

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError("node_count must be nonnegative")
        seen = set()
        for u, v, w in self.edges:
            if not (0 <= u < v < self.node_count):
                raise ValueError(f"edge ({u}, {v}) out of range or not canonical")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            if not (w > 0 and np.isfinite(w)):
                raise ValueError(f"non-positive weight on edge ({u}, {v})")
            seen.add((u, v))

    @classmethod
    def from_edges(cls, edges, node_count=None) -> "WeightedGraph":
        """Build from an iterable of (u, v[, w]) tuples.

        Parallel/duplicate entries for the same unordered pair are merged by
        summing their weights. Self-loops are rejected.
        """
        merged = {}
        max_node = -1
        for e in edges:
            if len(e) == 2:
                u, v = e
                w = 1.0
            else:
                u, v, w = e
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if u > v:
                u, v = v, u
            max_node = max(max_node, v)
            merged[(u, v)] = merged.get((u, v), 0.0) + float(w)
        n = (max_node + 1) if node_count is None else int(node_count)
        if max_node >= n:
            raise ValueError(
                f"node index {max_node} exceeds declared node count {n}"
            )
        canon = tuple(
            (u, v, w) for (u, v), w in sorted(merged.items())
        )
        return cls(node_count=n, edges=canon)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_array:
        """Symmetric weighted adjacency matrix."""
        n = self.node_count
        if not self.edges:
            return sp.csr_array((n, n), dtype=float)
        u, v, w = (np.asarray(col) for col in zip(*self.edges))
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        vals = np.concatenate([w, w]).astype(float)
        return sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()

    def degrees(self) -> np.ndarray:
        """Weighted degree of every node (zero for isolated nodes)."""
        deg = np.zeros(self.node_count)
        for u, v, w in self.edges:
            deg[u] += w
            deg[v] += w
        return deg


@dataclass(frozen=True)
class LaplacianOperator:
    """A graph Laplacian with its kind tag and node degrees."""

    kind: str
    matrix: sp.csr_array
    degrees: np.ndarray

    def __post_init__(self):
        if self.kind not in LAPLACIAN_KINDS:
            raise ValueError(f"unknown laplacian kind {self.kind!r}")

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    def validate(self, tol_scale: float = 1e-12):
        """Cheap structural checks: exact symmetry, row sums / diagonal."""
        m = self.matrix
        asym = (m - m.T)
        if asym.nnz and np.max(np.abs(asym.data)) != 0.0:
            raise AssertionError("laplacian is not symmetric")
        max_deg = max(float(np.max(self.degrees)), 1.0) if self.degrees.size else 1.0
        if self.kind == "unnormalized":
            row_sums = np.asarray(m.sum(axis=1)).ravel()
            if self.node_count and np.max(np.abs(row_sums)) > tol_scale * max_deg:
                raise AssertionError("unnormalized laplacian row sums not ~0")
        else:
            diag = m.diagonal()
            expect = np.where(self.degrees > 0, 1.0, 0.0)
            if self.node_count and np.max(np.abs(diag - expect)) > 1e-12:
                raise AssertionError("sym_normalized diagonal not 1 (or 0 if isolated)")


def parse_edge_list(text: str) -> WeightedGraph:
    """Parse the whitespace-separated edge-list format.

    Lines are ``u v`` or ``u v w``; ``#`` starts a comment; an optional first
    data line ``nodes N`` declares the node count (otherwise it is one past
    the largest index seen). Duplicate edges are merged by summing weights;
    self-loops are dropped with a warning. Errors carry 1-based line numbers.
    """
    declared = None
    raw_edges = []
    self_loops = 0
    saw_data = False
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if not saw_data and tokens[0] == "nodes":
            if len(tokens) != 2:
                raise ValueError(f"malformed nodes header at line {lineno}")
            try:
                declared = int(tokens[1])
            except ValueError:
                raise ValueError(f"malformed nodes header at line {lineno}") from None
            if declared < 0:
                raise ValueError(f"negative node count at line {lineno}")
            saw_data = True
            continue
        saw_data = True
        if len(tokens) not in (2, 3):
            raise ValueError(f"expected 'u v [w]' at line {lineno}")
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ValueError(f"invalid node index at line {lineno}") from None
        if u < 0 or v < 0:
            raise ValueError(f"negative node index at line {lineno}")
        w = 1.0
        if len(tokens) == 3:
            try:
                w = float(tokens[2])
            except ValueError:
                raise ValueError(f"invalid weight at line {lineno}") from None
        if not (w > 0 and np.isfinite(w)):
            raise ValueError(f"non-positive weight at line {lineno}")
        if u == v:
            self_loops += 1
            continue
        raw_edges.append((u, v, w))

    if self_loops:
        warnings.warn(f"dropped {self_loops} self-loop(s)", stacklevel=2)
    if declared is not None:
        max_seen = max((max(u, v) for u, v, _ in raw_edges), default=-1)
        if max_seen >= declared:
            raise ValueError(
                f"node index {max_seen} exceeds declared node count {declared}"
            )
    return WeightedGraph.from_edges(raw_edges, node_count=declared)


def read_edge_list(path) -> WeightedGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def read_node_id_map(path) -> dict:
    """Read an ``id,index`` CSV mapping external ids to node indices.

    A header line ``id,index`` is skipped if present. Indices must be unique
    nonnegative integers; ids must be unique.
    """
    mapping = {}
    used = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ValueError(f"expected 'id,index' at line {lineno}")
            if lineno == 1 and parts == ["id", "index"]:
                continue
            key, idx_text = parts
            try:
                idx = int(idx_text)
            except ValueError:
                raise ValueError(f"invalid index at line {lineno}") from None
            if idx < 0:
                raise ValueError(f"negative index at line {lineno}")
            if key in mapping:
                raise ValueError(f"duplicate id {key!r} at line {lineno}")
            if idx in used:
                raise ValueError(f"duplicate index {idx} at line {lineno}")
            mapping[key] = idx
            used.add(idx)
    return mapping


def build_laplacian(graph: WeightedGraph, kind: str = "unnormalized") -> LaplacianOperator:
    """Assemble L = D - W or its symmetric normalization.

    The matrix is built from a symmetric COO pattern so that symmetry holds
    bitwise, not just to rounding.
    """
    if kind not in LAPLACIAN_KINDS:
        raise ValueError(f"unknown laplacian kind {kind!r}")
    n = graph.node_count
    deg = graph.degrees()
    rows, cols, vals = [], [], []
    if kind == "unnormalized":
        scale = np.ones(n)
        diag = deg.copy()
    else:
        scale = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
        diag = np.where(deg > 0, 1.0, 0.0)
    for u, v, w in graph.edges:
        value = -w if kind == "unnormalized" else -w * scale[u] * scale[v]
        rows.extend((u, v))
        cols.extend((v, u))
        vals.extend((value, value))
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    mat = sp.coo_array(
        (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
        shape=(n, n),
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return LaplacianOperator(kind=kind, matrix=mat, degrees=deg)


def connected_components(graph: WeightedGraph) -> np.ndarray:
    """Component label per node (labels are 0..k-1, order scipy's)."""
    if graph.node_count == 0:
        return np.zeros(0, dtype=np.int64)
    _, labels = csgraph.connected_components(graph.adjacency(), directed=False)
    return labels.astype(np.int64)
