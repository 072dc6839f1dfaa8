"""Exact gradients for the fixed H2GCN graph, Adam, and full-batch training."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (ForwardCache, ModelParams, Operators, VariantConfig, build_operators,
                    forward, init_params, log_softmax, loss, predict, with_dropout)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    l2: float = 5e-4
    max_epochs: int = 2000
    patience: int = 100
    seed: int = 0
    hidden_dim: int = 64

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.patience < 0 or self.l2 < 0:
            raise ValueError(f"invalid training config {self}")


def backward(cache: ForwardCache, operators: Operators, variant: VariantConfig, labels, mask,
             params: ModelParams, l2: float = 0.0) -> ModelParams:
    """Gradients of :func:`heterograph.model.loss` w.r.t. every weight matrix."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("loss mask is empty")
    if cache.logits.shape[1] != params.W_c.shape[1] or cache.dropped.shape[1] != params.W_c.shape[0]:
        raise ValueError("cache does not match params")

    dlogits = np.zeros_like(cache.logits)
    probs = np.exp(log_softmax(cache.logits[mask]))
    probs[np.arange(mask.size), np.asarray(labels)[mask]] -= 1.0
    np.add.at(dlogits, mask, probs / mask.size)

    dW_c = cache.dropped.T @ dlogits
    dfinal = dlogits @ params.W_c.T
    if cache.dropout_mask is not None:
        dfinal = dfinal * cache.dropout_mask

    p = params.W_e.shape[1]
    dims = variant.round_dims(p)
    drounds = [np.zeros((cache.logits.shape[0], d)) for d in dims]
    offset = 0
    for k in variant.jk_keep:
        drounds[k] += dfinal[:, offset:offset + dims[k]]
        offset += dims[k]

    dW_rounds = [None] * len(params.W_rounds)
    hops = variant.hops
    for k in range(variant.K, 0, -1):
        g = drounds[k]
        if not g.any():
            continue
        width = dims[k - 1]
        if variant.nonlinear_rounds:
            dz = g * (cache.round_pre[k] > 0)
            dW_rounds[k - 1] = cache.round_inputs[k].T @ dz
            dzin = dz @ params.W_rounds[k - 1].T
            drounds[k - 1] += dzin[:, :width]
            blocks = [dzin[:, width * (j + 1):width * (j + 2)] for j in range(len(hops))]
        else:
            blocks = [g[:, width * j:width * (j + 1)] for j in range(len(hops))]
        for hop, blk in zip(hops, blocks):
            # operators are symmetric, so the adjoint is the operator itself
            drounds[k - 1] += operators.ops[hop] @ blk
    for i, w in enumerate(dW_rounds):
        if w is None:
            dW_rounds[i] = np.zeros_like(params.W_rounds[i])

    dr0 = drounds[0]
    if variant.embed_nonlinearity == "relu":
        dr0 = dr0 * (cache.pre0 > 0)
    dW_e = cache.X.T @ dr0

    grads = ModelParams(dW_e, dW_c, dW_rounds)
    if l2:
        for gw, w in zip(grads.arrays(), params.arrays()):
            gw += 2.0 * l2 * w
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()])


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[ModelParams, AdamState]:
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new, ms, vs = [], [], []
    for w, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new.append(w - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        ms.append(m)
        vs.append(v)
    return ModelParams.from_arrays(new), AdamState(ms, vs, t)


def accuracy(logits: np.ndarray, labels, subset) -> float:
    subset = np.asarray(subset)
    if subset.size == 0:
        raise ValueError("accuracy subset is empty")
    return float(np.mean(predict(logits[subset]) == np.asarray(labels)[subset]))


@dataclass
class History:
    rows: list[tuple] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    columns = ("epoch", "train_loss", "train_acc", "val_acc", "val_loss")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


@dataclass
class TrainResult:
    params: ModelParams
    history: History
    train_acc: float
    val_acc: float
    test_acc: float
    epochs: int
    wall_ms: float


def train(bundle, split, variant: VariantConfig, config: TrainConfig,
          operators: Operators | None = None) -> TrainResult:
    """Full-batch Adam with early stopping on validation accuracy.

    Returns the parameters from the epoch with the best validation accuracy.
    """
    graph = bundle.graph if hasattr(bundle, "graph") else bundle
    tr, va = split.train, split.val
    if tr.size == 0 or va.size == 0:
        raise ValueError("split needs non-empty train and val sets")
    start = time.perf_counter()
    ops = operators if operators is not None else build_operators(graph, variant)
    labels = graph.labels
    params = init_params(graph.feature_dim, config.hidden_dim, graph.num_classes, variant, config.seed)
    state = AdamState.zeros_like(params)
    epoch_seeds = np.random.default_rng(config.seed).integers(0, 2**63 - 1, size=config.max_epochs)

    hist = History()
    best_val, best_params, stale = -1.0, params, 0
    # the eval pass after each step doubles as the next epoch's propagation;
    # dropout only touches the final representation
    _, cache = forward(params, graph, ops, variant, "eval")
    for epoch in range(1, config.max_epochs + 1):
        tcache = with_dropout(cache, params, variant, int(epoch_seeds[epoch - 1]))
        train_loss = loss(tcache.logits, labels, tr, params, config.l2)
        if not np.isfinite(train_loss):
            raise TrainingDiverged(epoch, train_loss)
        grads = backward(tcache, ops, variant, labels, tr, params, config.l2)
        params, state = adam_step(params, grads, state, config.learning_rate)

        eval_logits, cache = forward(params, graph, ops, variant, "eval")
        val_acc = accuracy(eval_logits, labels, va)
        hist.rows.append((epoch, train_loss, accuracy(eval_logits, labels, tr), val_acc,
                          loss(eval_logits, labels, va, params)))
        if val_acc > best_val:
            best_val, best_params, stale = val_acc, params, 0
            best_logits = eval_logits
            hist.best_epoch = epoch
        else:
            stale += 1
        if stale >= config.patience:
            break
    hist.stopped_epoch = epoch

    final_logits = best_logits
    return TrainResult(
        params=best_params,
        history=hist,
        train_acc=accuracy(final_logits, labels, tr),
        val_acc=accuracy(final_logits, labels, va),
        test_acc=accuracy(final_logits, labels, split.test) if split.test.size else float("nan"),
        epochs=epoch,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )


def evaluate(params: ModelParams, bundle, split, variant: VariantConfig, subset: str = "test",
             operators: Operators | None = None) -> float:
    graph = bundle.graph if hasattr(bundle, "graph") else bundle
    ops = operators if operators is not None else build_operators(graph, variant)
    logits, _ = forward(params, graph, ops, variant, "eval")
    idx = split.indices(subset) if isinstance(subset, str) else np.asarray(subset)
    return accuracy(logits, graph.labels, idx)
