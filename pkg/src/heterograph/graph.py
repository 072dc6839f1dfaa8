"""Sparse undirected graphs, exact k-hop operators and homophily statistics.

Adjacency is held in CSR form (``indptr``/``indices``) with sorted column
indices, stored symmetrically and without self-loops.  Products are
delegated to :mod:`scipy.sparse`, whose CSR kernels walk each row in stored
(ascending-column) order, so results are bit-reproducible.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised for malformed graph input or undefined statistics."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Symmetric n x n sparse matrix in CSR form."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        for name in ("indptr", "indices", "data"):
            _readonly(np.asarray(getattr(self, name)))

    @classmethod
    def from_scipy(cls, mat: sp.spmatrix) -> "SparseOperator":
        csr = sp.csr_matrix(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(
            n=csr.shape[0],
            indptr=csr.indptr.astype(np.int64),
            indices=csr.indices.astype(np.int64),
            data=csr.data.astype(np.float64),
        )

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows(), weights=self.data, minlength=self.n).astype(np.float64)

    def rows(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def pairs(self) -> set[tuple[int, int]]:
        """Stored (row, col) positions."""
        return set(zip(self.rows().tolist(), self.indices.tolist()))

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def __matmul__(self, dense):
        return spmm(self, dense)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with integer labels and dense features."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    num_classes: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("indptr", "indices", "labels", "features"):
            _readonly(np.asarray(getattr(self, name)))

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        """Undirected edge count, each edge once."""
        return int(self.indices.size) // 2

    @cached_property
    def degrees(self) -> np.ndarray:
        return _readonly(np.diff(self.indptr))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edge_array(self) -> np.ndarray:
        """(|E|, 2) array of undirected edges with u < v, lexicographically sorted."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    @cached_property
    def adjacency(self) -> SparseOperator:
        return SparseOperator(
            n=self.n,
            indptr=self.indptr,
            indices=self.indices,
            data=np.ones(self.indices.size),
        )

    def with_features(self, features: np.ndarray) -> "Graph":
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.n:
            raise GraphError(f"features must have shape ({self.n}, F), got {features.shape}")
        return Graph(self.n, self.indptr, self.indices, self.labels, features,
                     self.num_classes, dict(self.meta))


def canonical_edges(edges, n: int) -> tuple[np.ndarray, dict]:
    """Deduplicate, drop self-loops and orient each edge as u < v.

    Returns the sorted (E, 2) edge array and ingestion counts.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        bad = e[(e < 0).any(axis=1) | (e >= n).any(axis=1)][0]
        raise GraphError(f"edge ({bad[0]}, {bad[1]}) out of range for n={n}")
    loops = e[:, 0] == e[:, 1]
    e = e[~loops]
    lo, hi = np.minimum(e[:, 0], e[:, 1]), np.maximum(e[:, 0], e[:, 1])
    directed = set(zip(e[:, 0].tolist(), e[:, 1].tolist()))
    one_way = sum((v, u) not in directed for u, v in directed)
    und = np.unique(np.stack([lo, hi], axis=1), axis=0) if e.size else np.zeros((0, 2), np.int64)
    stats = {
        "self_loops": int(loops.sum()),
        "duplicates": int(len(e) - len(und)),
        "one_way_pairs": int(one_way),
    }
    return und, stats


def from_edge_list(edges, n: int, labels=None, features=None, num_classes: int | None = None) -> Graph:
    """Build a :class:`Graph` from (u, v) pairs.

    Self-loops are dropped, duplicates merged and every edge symmetrized.
    """
    und, stats = canonical_edges(edges, n)
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise GraphError(f"labels must have length {n}, got {labels.shape}")
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n else 0
    if n and (labels.min() < 0 or labels.max() >= num_classes):
        raise GraphError(f"label {int(labels.max())} outside [0, {num_classes})")
    if features is None:
        features = np.zeros((n, 0))
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n:
        raise GraphError(f"features must have shape ({n}, F), got {features.shape}")

    rows = np.concatenate([und[:, 0], und[:, 1]])
    cols = np.concatenate([und[:, 1], und[:, 0]])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return Graph(n, indptr, cols.astype(np.int64), labels, features, int(num_classes),
                 {"ingest": stats})


def edge_homophily(graph: Graph, labels=None) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    if graph.num_edges == 0:
        raise GraphError("edge homophily is undefined on a graph without edges")
    y = graph.labels if labels is None else np.asarray(labels)
    e = graph.edge_array()
    return float(np.count_nonzero(y[e[:, 0]] == y[e[:, 1]])) / len(e)


def compatibility_matrix(graph: Graph, undefined: str = "raise") -> np.ndarray:
    """Row-stochastic class-to-class edge fractions over directed edge copies.

    ``undefined`` controls classes without outgoing edges: ``"raise"`` or
    ``"nan"`` (the row is filled with NaN).
    """
    k = graph.num_classes
    src = graph.labels[graph.adjacency.rows()]
    dst = graph.labels[graph.indices]
    counts = np.zeros((k, k))
    np.add.at(counts, (src, dst), 1.0)
    totals = counts.sum(axis=1)
    empty = np.flatnonzero(totals == 0)
    if empty.size and undefined == "raise":
        raise GraphError(f"classes {empty.tolist()} have no outgoing edges")
    with np.errstate(invalid="ignore", divide="ignore"):
        return counts / totals[:, None]


def exact_khop_adjacency(graph: Graph, k: int) -> SparseOperator:
    """0/1 operator linking nodes at shortest-path distance exactly ``k``."""
    if k == 1:
        return graph.adjacency
    if k != 2:
        raise GraphError(f"only k in {{1, 2}} is supported, got {k}")
    a = graph.adjacency.csr
    two = (a @ a).tocsr()
    two.data[:] = 1.0
    # drop 1-hop pairs and the diagonal without densifying
    two = two - two.multiply(a) - two.multiply(sp.identity(graph.n, format="csr"))
    return _pattern(two)


def merged_khop_adjacency(graph: Graph, k: int) -> SparseOperator:
    """Neighborhoods with the ego folded in: N1 = 1[A + I > 0], N2 = 1[A^2 > 0] minus N1."""
    if k == 1:
        return _pattern(graph.adjacency.csr + sp.identity(graph.n, format="csr"))
    return exact_khop_adjacency(graph, k)


def _pattern(mat) -> SparseOperator:
    mat = sp.csr_matrix(mat)
    mat.eliminate_zeros()
    mat.data[:] = 1.0
    return SparseOperator.from_scipy(mat)


def sym_normalize(op: SparseOperator) -> SparseOperator:
    """Scale entry (u, v) by d_u^-1/2 d_v^-1/2; zero-degree rows stay zero."""
    d = op.row_sums()
    inv = np.zeros_like(d)
    np.divide(1.0, np.sqrt(d), out=inv, where=d > 0)
    data = op.data * inv[op.rows()] * inv[op.indices]
    return SparseOperator(op.n, op.indptr, op.indices, data)


def unnormalized_laplacian(graph: Graph, dense: bool = False):
    """L = D - A as a scipy CSR matrix (or ndarray with ``dense=True``)."""
    a = graph.adjacency.csr
    lap = (sp.diags(graph.degrees.astype(np.float64)) - a).tocsr()
    return lap.toarray() if dense else lap


def spmm(op: SparseOperator, dense) -> np.ndarray:
    """Sparse-dense product ``op @ dense``."""
    x = np.asarray(dense)
    if x.shape[0] != op.n:
        raise GraphError(f"shape mismatch: operator is {op.n}x{op.n}, dense has {x.shape[0]} rows")
    return np.asarray(op.csr @ x)


# --- file formats ---------------------------------------------------------

def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for u, v in graph.edge_array().tolist():
            f.write(f"{u}\t{v}\n")


def read_edge_list(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing edge file: {path}")
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                if len(parts) != 2:
                    raise ValueError
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphError(f"{path.name}:{lineno}: expected 'u<TAB>v', got {line!r}") from None
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_node_table(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{j}" for j in range(graph.feature_dim)])
        for v in range(graph.n):
            w.writerow([v, int(graph.labels[v])] + [_fmt(x) for x in graph.features[v]])


def read_node_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (labels, features) ordered by node id."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing node table: {path}")
    with open(path, encoding="utf-8", newline="") as f:
        rows = csv.reader(f)
        header = next(rows, None)
        if not header or header[:2] != ["id", "label"]:
            raise GraphError(f"{path.name}:1: header must start with 'id,label'")
        width = len(header)
        ids, labels, feats = [], [], []
        for lineno, row in enumerate(rows, 2):
            if len(row) != width:
                raise GraphError(f"{path.name}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
                feats.append([float(x) for x in row[2:]])
            except ValueError:
                raise GraphError(f"{path.name}:{lineno}: malformed value") from None
    ids = np.asarray(ids, dtype=np.int64)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise GraphError(f"{path.name}: node ids must be exactly 0..n-1")
    order = np.argsort(ids)
    x = np.asarray(feats, dtype=np.float64).reshape(len(ids), width - 2)
    return np.asarray(labels, dtype=np.int64)[order], x[order]
