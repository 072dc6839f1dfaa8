"""Synthetic benchmarks with controllable homophily.

Graphs grow by a modified preferential attachment: a new node of class i
links to an existing node v of class j with probability proportional to
``H[i, j] * (deg(v) + 1)``.  Features are attached afterwards, either
sampled from a labelled corpus or drawn from a class-conditional
bag-of-words style generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, from_edge_list, read_node_table

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")


def compatibility_from_h(h: float, num_classes: int) -> np.ndarray:
    """Compatibility matrix with diagonal h and uniform off-diagonal (1-h)/(k-1)."""
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"h must lie in [0, 1], got {h}")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if num_classes == 1:
        if h != 1.0:
            raise ValueError("a single class forces h = 1")
        return np.ones((1, 1))
    rho = (1.0 - h) / (num_classes - 1)
    if math.isclose(rho, h, rel_tol=1e-15, abs_tol=0.0):
        rho = h  # h = 1/k: keep the matrix exactly uniform despite rounding
    H = np.full((num_classes, num_classes), rho)
    np.fill_diagonal(H, h)
    return H


@dataclass(frozen=True)
class SyntheticFeatures:
    """Class-conditional sparse binary features.

    Each class owns a random subset of ``round(signal_strength * dim)``
    indicator dimensions that switch on with probability ``p_signal``;
    every other dimension switches on with probability ``p_noise``.
    """

    dim: int = 100
    signal_strength: float = 0.2
    p_signal: float = 0.25
    p_noise: float = 0.05


@dataclass(frozen=True)
class CorpusFeatures:
    """Sample features from a node table (``id,label,f0,...``)."""

    path: str | Path
    class_map: dict | None = None


@dataclass(frozen=True)
class GenConfig:
    n: int
    num_classes: int
    target_h: float | None = 0.5
    compatibility: np.ndarray | None = field(default=None, compare=False)
    edges_per_node: int = 2
    seed: int = 0
    balanced: bool = True
    features: SyntheticFeatures | CorpusFeatures | None = None

    def __post_init__(self):
        if self.num_classes < 1 or self.n < self.num_classes:
            raise ValueError(f"need n >= num_classes >= 1, got n={self.n}, classes={self.num_classes}")
        if self.edges_per_node < 1:
            raise ValueError("edges_per_node must be >= 1")
        if self.compatibility is None:
            if self.target_h is None or not 0.0 <= self.target_h <= 1.0:
                raise ValueError(f"target_h must lie in [0, 1], got {self.target_h}")

    def compat(self) -> np.ndarray:
        if self.compatibility is not None:
            H = np.asarray(self.compatibility, dtype=np.float64)
            if H.shape != (self.num_classes,) * 2 or (H < 0).any():
                raise ValueError("compatibility must be a non-negative k x k matrix")
            return H / H.sum(axis=1, keepdims=True)
        return compatibility_from_h(self.target_h, self.num_classes)


def _class_sequence(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    k = cfg.num_classes
    seed_classes = np.arange(k)
    rest = cfg.n - k
    if not cfg.balanced:
        return np.concatenate([seed_classes, rng.integers(0, k, size=rest)])
    totals = np.full(k, cfg.n // k)
    totals[: cfg.n % k] += 1
    pool = np.repeat(np.arange(k), totals - 1)
    rng.shuffle(pool)
    return np.concatenate([seed_classes, pool])


def generate_graph(cfg: GenConfig) -> Graph:
    """Grow a graph by compatibility-weighted preferential attachment.

    The seed is a ring over one node per class.  Every later node draws
    ``edges_per_node`` distinct targets sequentially, renormalizing the
    weights after each draw.  If fewer targets carry positive weight, the
    node links to all of them.
    """
    rng = np.random.default_rng(cfg.seed)
    H = cfg.compat()
    k, m = cfg.num_classes, cfg.edges_per_node
    labels = _class_sequence(cfg, rng)

    deg = np.zeros(cfg.n, dtype=np.int64)
    edges = []
    if k >= 2:
        ring = [(i, (i + 1) % k) for i in range(k)] if k >= 3 else [(0, 1)]
        for u, v in ring:
            edges.append((u, v))
            deg[u] += 1
            deg[v] += 1

    for u in range(k, cfg.n):
        w = H[labels[u], labels[:u]] * (deg[:u] + 1.0)
        candidates = np.flatnonzero(w > 0)
        if candidates.size <= m:
            targets = candidates
        else:
            w = w.copy()
            targets = np.empty(m, dtype=np.int64)
            for j in range(m):
                c = np.cumsum(w)
                t = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
                t = min(t, u - 1)
                while w[t] <= 0:  # guard against landing on a zeroed slot at float edges
                    t -= 1
                targets[j] = t
                w[t] = 0.0
        for t in targets:
            edges.append((u, int(t)))
            deg[t] += 1
        deg[u] += len(targets)

    g = from_edge_list(edges, cfg.n, labels, num_classes=k)
    g.meta["generator"] = {"seed": int(cfg.seed), "edges_per_node": m}
    return g


# --- features -------------------------------------------------------------

def attach_features(graph: Graph, mode, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    if isinstance(mode, SyntheticFeatures):
        return graph.with_features(_synthetic_features(graph.labels, graph.num_classes, mode, rng))
    if isinstance(mode, CorpusFeatures):
        return graph.with_features(_corpus_features(graph.labels, graph.num_classes, mode, rng))
    raise TypeError(f"unknown feature mode {mode!r}")


def _synthetic_features(labels, k, spec: SyntheticFeatures, rng) -> np.ndarray:
    if spec.dim < 1:
        raise ValueError("feature dim must be >= 1")
    n_signal = int(round(spec.signal_strength * spec.dim))
    probs = np.full((k, spec.dim), spec.p_noise)
    for c in range(k):
        probs[c, rng.choice(spec.dim, size=n_signal, replace=False)] = spec.p_signal
    return (rng.random((len(labels), spec.dim)) < probs[labels]).astype(np.float64)


def _corpus_features(labels, k, spec: CorpusFeatures, rng) -> np.ndarray:
    c_labels, c_feats = read_node_table(spec.path)
    synth_sizes = np.bincount(labels, minlength=k)
    corpus_classes = np.unique(c_labels)
    corpus_sizes = {int(c): int((c_labels == c).sum()) for c in corpus_classes}

    if spec.class_map is not None:
        psi = {int(a): int(b) for a, b in spec.class_map.items()}
    else:
        # pair classes by size rank; ties keep index order
        s_order = sorted(range(k), key=lambda c: (-synth_sizes[c], c))
        c_order = sorted(corpus_sizes, key=lambda c: (-corpus_sizes[c], c))
        if len(c_order) < k:
            raise GraphError(f"corpus has {len(c_order)} classes, need {k}")
        psi = dict(zip(s_order, c_order))

    out = np.zeros((len(labels), c_feats.shape[1]))
    for c in range(k):
        members = np.flatnonzero(labels == c)
        pool = np.flatnonzero(c_labels == psi[c])
        if pool.size < members.size:
            raise GraphError(
                f"corpus class {psi[c]} has {pool.size} nodes but synthetic class {c} needs {members.size}"
            )
        out[members] = c_feats[rng.choice(pool, size=members.size, replace=False)]
    return out


# --- splits ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SplitAssignment:
    """Per-node tag: 0 = train, 1 = val, 2 = test."""

    tags: np.ndarray

    def indices(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.tags == SPLIT_NAMES.index(name))

    @property
    def train(self) -> np.ndarray:
        return self.indices("train")

    @property
    def val(self) -> np.ndarray:
        return self.indices("val")

    @property
    def test(self) -> np.ndarray:
        return self.indices("test")

    def to_dict(self) -> dict:
        return {name: self.indices(name).tolist() for name in SPLIT_NAMES}

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "SplitAssignment":
        tags = np.full(n, -1, dtype=np.int8)
        for i, name in enumerate(SPLIT_NAMES):
            idx = np.asarray(d.get(name, []), dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise GraphError(f"split '{name}' references unknown node")
            if (tags[idx] != -1).any():
                raise GraphError(f"split '{name}' overlaps another split")
            tags[idx] = i
        if (tags == -1).any():
            raise GraphError(f"split does not cover node {int(np.flatnonzero(tags == -1)[0])}")
        return cls(tags)


def _split_counts(size: int, fractions) -> np.ndarray:
    raw = np.asarray(fractions) * size
    counts = np.floor(raw).astype(np.int64)
    for i in np.argsort(-(raw - counts), kind="stable")[: size - counts.sum()]:
        counts[i] += 1
    for i in np.flatnonzero((counts == 0) & (np.asarray(fractions) > 0)):
        counts[int(np.argmax(counts))] -= 1
        counts[i] += 1
    return counts


def make_splits(graph_or_labels, fractions=(0.25, 0.25, 0.5), seed: int = 0) -> SplitAssignment:
    """Stratified train/val/test assignment, deterministic given ``seed``."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    labels = graph_or_labels.labels if isinstance(graph_or_labels, Graph) else np.asarray(graph_or_labels)
    needed = sum(f > 0 for f in fractions)
    rng = np.random.default_rng(seed)
    tags = np.empty(len(labels), dtype=np.int8)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < needed:
            raise ValueError(f"class {int(c)} has {members.size} nodes; cannot populate {needed} splits")
        members = rng.permutation(members)
        counts = _split_counts(members.size, fractions)
        tags[members] = np.repeat(np.arange(3, dtype=np.int8), counts)
    return SplitAssignment(tags)
