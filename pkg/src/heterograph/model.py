"""H2GCN forward computation, its ablation variants and the MLP baseline.

The pipeline has three stages:

1. ego embedding ``r0 = sigma(X @ W_e)``;
2. ``K`` rounds of aggregation, each concatenating the degree-normalized
   averages over the active hop neighborhoods;
3. concatenation of the kept rounds, dropout, and a linear classifier.

Softmax is left to :func:`loss`; logits are the public output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import (Graph, SparseOperator, exact_khop_adjacency, merged_khop_adjacency,
                    spmm, sym_normalize)

HOP_NAMES = {"one_hop": 1, "two_hop": 2}


@dataclass(frozen=True)
class VariantConfig:
    """Architecture switches.

    ``separate_embeddings=False`` replaces the exact hop neighborhoods with
    ego-inclusive ones (self-loops merged into the 1-hop operator).
    ``jk_keep`` lists the rounds concatenated into the final representation.
    """

    K: int = 2
    neighborhoods: tuple[str, ...] = ("one_hop", "two_hop")
    separate_embeddings: bool = True
    jk_keep: tuple[int, ...] = (0, 1, 2)
    nonlinear_rounds: bool = False
    dropout_rate: float = 0.5
    embed_nonlinearity: str = "relu"

    def __post_init__(self):
        if self.K not in (0, 1, 2):
            raise ValueError(f"K must be 0, 1 or 2, got {self.K}")
        if not self.jk_keep:
            raise ValueError("jk_keep must not be empty")
        if any(k < 0 or k > self.K for k in self.jk_keep):
            raise ValueError(f"jk_keep {self.jk_keep} outside rounds 0..{self.K}")
        if self.K > 0 and not self.neighborhoods:
            raise ValueError("aggregation rounds need at least one neighborhood")
        unknown = set(self.neighborhoods) - set(HOP_NAMES)
        if unknown:
            raise ValueError(f"unknown neighborhoods {sorted(unknown)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.embed_nonlinearity not in ("relu", "identity"):
            raise ValueError(f"unknown nonlinearity {self.embed_nonlinearity!r}")

    @property
    def hops(self) -> tuple[int, ...]:
        return tuple(sorted(HOP_NAMES[h] for h in self.neighborhoods))

    def round_dims(self, p: int) -> list[int]:
        """Width of r^(k) for k = 0..K."""
        if self.nonlinear_rounds:
            return [p] * (self.K + 1)
        width = len(self.hops)
        return [p * width**k for k in range(self.K + 1)]

    def final_dim(self, p: int) -> int:
        dims = self.round_dims(p)
        return sum(dims[k] for k in self.jk_keep)


_H1 = dict(K=1, jk_keep=(0, 1))
VARIANTS: dict[str, VariantConfig] = {
    "MLP": VariantConfig(K=0, neighborhoods=(), jk_keep=(0,)),
    "H2GCN-1": VariantConfig(**_H1),
    "H2GCN-2": VariantConfig(),
    # D1: embedding separation
    "S0": VariantConfig(**_H1),
    "S1": VariantConfig(K=1, neighborhoods=("one_hop",), jk_keep=(0, 1)),
    "NS0": VariantConfig(K=1, separate_embeddings=False, jk_keep=(1,)),
    "NS1": VariantConfig(K=1, neighborhoods=("one_hop",), separate_embeddings=False, jk_keep=(1,)),
    # D2: neighborhoods
    "N0": VariantConfig(K=1, jk_keep=(1,)),
    "N1": VariantConfig(K=1, neighborhoods=("two_hop",), jk_keep=(0, 1)),
    "N2": VariantConfig(K=1, neighborhoods=("one_hop",), jk_keep=(0, 1)),
    # D3: intermediate representations
    "K0": VariantConfig(jk_keep=(1, 2)),
    "K1": VariantConfig(jk_keep=(0, 2)),
    "K2": VariantConfig(jk_keep=(0, 1)),
    "R2": VariantConfig(jk_keep=(2,)),
    "NL": VariantConfig(nonlinear_rounds=True),
}
VARIANTS["full"] = VARIANTS["H2GCN-2"]


def get_variant(name: str, **overrides) -> VariantConfig:
    try:
        base = VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
    return replace(base, **overrides) if overrides else base


@dataclass(frozen=True, eq=False)
class Operators:
    """Normalized hop operators keyed by hop index."""

    separate: bool
    ops: dict[int, SparseOperator]


def build_operators(graph: Graph, variant: VariantConfig) -> Operators:
    build = exact_khop_adjacency if variant.separate_embeddings else merged_khop_adjacency
    return Operators(variant.separate_embeddings,
                     {k: sym_normalize(build(graph, k)) for k in variant.hops})


@dataclass
class ModelParams:
    W_e: np.ndarray
    W_c: np.ndarray
    W_rounds: list[np.ndarray] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        return [self.W_e, self.W_c, *self.W_rounds]

    def names(self) -> list[str]:
        return ["W_e", "W_c"] + [f"W_{k + 1}" for k in range(len(self.W_rounds))]

    def copy(self) -> "ModelParams":
        return ModelParams(self.W_e.copy(), self.W_c.copy(), [w.copy() for w in self.W_rounds])

    @classmethod
    def from_arrays(cls, arrays) -> "ModelParams":
        arrays = list(arrays)
        return cls(arrays[0], arrays[1], arrays[2:])


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(F: int, p: int, num_classes: int, variant: VariantConfig, seed: int = 0) -> ModelParams:
    if p < 1:
        raise ValueError("embedding dimension p must be >= 1")
    rng = np.random.default_rng(seed)
    W_e = glorot(rng, F, p)
    rounds = []
    if variant.nonlinear_rounds:
        width = 1 + len(variant.hops)
        rounds = [glorot(rng, width * p, p) for _ in range(variant.K)]
    W_c = glorot(rng, variant.final_dim(p), num_classes)
    return ModelParams(W_e, W_c, rounds)


@dataclass
class ForwardCache:
    X: np.ndarray
    pre0: np.ndarray
    rounds: list[np.ndarray]
    round_inputs: list[np.ndarray | None]
    round_pre: list[np.ndarray | None]
    final: np.ndarray
    dropout_mask: np.ndarray | None
    dropped: np.ndarray
    logits: np.ndarray


def _check(params: ModelParams, operators: Operators, variant: VariantConfig):
    if set(operators.ops) != set(variant.hops) or operators.separate != variant.separate_embeddings:
        raise ValueError("operators were built for a different variant")
    p = params.W_e.shape[1]
    if params.W_c.shape[0] != variant.final_dim(p):
        raise ValueError(f"W_c has {params.W_c.shape[0]} rows, variant needs {variant.final_dim(p)}")
    if variant.nonlinear_rounds and len(params.W_rounds) != variant.K:
        raise ValueError("nonlinear variant needs one weight matrix per round")


def forward(params: ModelParams, graph: Graph, operators: Operators, variant: VariantConfig,
            mode: str = "eval", seed: int | None = None, X: np.ndarray | None = None):
    """Return ``(logits, cache)``; dropout is only active with ``mode='train'``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    _check(params, operators, variant)
    X = graph.features if X is None else X
    pre0 = X @ params.W_e
    r = np.maximum(pre0, 0.0) if variant.embed_nonlinearity == "relu" else pre0
    rounds, inputs, pres = [r], [None], [None]
    for k in range(1, variant.K + 1):
        aggr = [spmm(operators.ops[i], r) for i in variant.hops]
        if variant.nonlinear_rounds:
            z_in = np.concatenate([r] + aggr, axis=1)
            z = z_in @ params.W_rounds[k - 1]
            r = np.maximum(z, 0.0)
            inputs.append(z_in)
            pres.append(z)
        else:
            r = np.concatenate(aggr, axis=1) if len(aggr) > 1 else aggr[0]
            inputs.append(None)
            pres.append(None)
        rounds.append(r)
    final = np.concatenate([rounds[k] for k in variant.jk_keep], axis=1) \
        if len(variant.jk_keep) > 1 else rounds[variant.jk_keep[0]]
    logits = final @ params.W_c
    cache = ForwardCache(X, pre0, rounds, inputs, pres, final, None, final, logits)
    if mode == "train":
        cache = with_dropout(cache, params, variant, seed)
    return cache.logits, cache


def with_dropout(cache: ForwardCache, params: ModelParams, variant: VariantConfig, seed) -> ForwardCache:
    """Train-mode view of an eval-mode cache: inverted dropout on the final representation."""
    if variant.dropout_rate == 0:
        return cache
    rng = np.random.default_rng(seed)
    keep = 1.0 - variant.dropout_rate
    mask = (rng.random(cache.final.shape, dtype=np.float32) < keep) / keep
    dropped = cache.final * mask
    return replace(cache, dropout_mask=mask, dropped=dropped, logits=dropped @ params.W_c)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def l2_penalty(params: ModelParams) -> float:
    return float(sum(np.sum(w * w) for w in params.arrays()))


def loss(logits: np.ndarray, labels, mask, params: ModelParams, l2: float = 0.0) -> float:
    """Mean cross-entropy over ``mask`` plus ``l2`` times the squared Frobenius norms."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("loss mask is empty")
    lp = log_softmax(logits[mask])
    nll = -lp[np.arange(mask.size), np.asarray(labels)[mask]].mean()
    return float(nll + l2 * l2_penalty(params)) if l2 else float(nll)


def predict(logits: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the smallest class index."""
    return np.argmax(logits, axis=1)


# --- checkpoints ----------------------------------------------------------

MAGIC = b"H2GCNPRM"


def save_params(params: ModelParams, path) -> None:
    """Flat container: magic, matrix count, then (rows, cols, row-major f64 data) per matrix."""
    arrays = params.arrays()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            a = np.ascontiguousarray(a, dtype="<f8")
            f.write(struct.pack("<QQ", *a.shape))
            f.write(a.tobytes(order="C"))


def load_params(path) -> ModelParams:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        (count,) = struct.unpack("<I", f.read(4))
        arrays = []
        for _ in range(count):
            rows, cols = struct.unpack("<QQ", f.read(16))
            buf = f.read(8 * rows * cols)
            if len(buf) != 8 * rows * cols:
                raise ValueError(f"{path}: truncated checkpoint")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(rows, cols).astype(np.float64))
    return ModelParams.from_arrays(arrays)
