"""Minimal self-contained GCN/SGC with hand-derived gradients and Adam.

Everything is float64 numpy; training is full-batch and exactly reproducible
(dropout uses a counter-based generator keyed by seed/epoch/layer). The
convolution is C = (D+I)^-1/2 (A+I) (D+I)^-1/2 where the degree vector is
supplied by the caller, so coreset subgraphs can keep original-graph degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bundle import GraphBundle

ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass
class GnnModel:
    arch: str                      # "gcn" | "sgc"
    weights: list
    layers: int = 2
    hidden_dim: int = 256
    dropout_rate: float = 0.5


@dataclass
class TrainConfig:
    epochs: int = 600
    lr: float = 0.01
    weight_decay: float = 5e-4
    seed: int = 0
    sample_weights: np.ndarray | None = None
    mode: str = "transductive"     # or "inductive"
    eval_interval: int = 10
    decoupled_wd: bool = False


@dataclass(frozen=True)
class TrainingGraph:
    """A GraphBundle-like coreset graph: adjacency plus the degree vector the
    convolution should use (original-graph degrees for ego unions)."""

    n: int
    adjacency: sp.csr_matrix
    conv_degrees: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_ids: np.ndarray
    weights: np.ndarray | None = None
    name: str = "coreset"


def build_conv(adjacency: sp.spmatrix, degrees: np.ndarray) -> sp.csr_matrix:
    n = adjacency.shape[0]
    d_tilde = np.asarray(degrees, dtype=np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(d_tilde)
    a_tilde = (adjacency + sp.eye(n)).tocsr()
    conv = sp.diags(inv_sqrt) @ a_tilde @ sp.diags(inv_sqrt)
    conv = conv.tocsr()
    conv.sort_indices()
    return conv


def init_model(arch: str, in_dim: int, num_classes: int, hidden_dim: int = 256,
               layers: int = 2, dropout_rate: float = 0.5, seed: int = 0) -> GnnModel:
    """Glorot-uniform initialization with a deterministic seed."""
    rng = np.random.default_rng(seed)
    if arch == "gcn":
        dims = [in_dim] + [hidden_dim] * (layers - 1) + [num_classes]
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    elif arch == "sgc":
        limit = np.sqrt(6.0 / (in_dim + num_classes))
        weights = [rng.uniform(-limit, limit, size=(in_dim, num_classes))]
    else:
        raise ValueError(f"unknown arch {arch!r}")
    return GnnModel(arch=arch, weights=weights, layers=layers,
                    hidden_dim=hidden_dim, dropout_rate=dropout_rate)


def _dropout_mask(shape, rate: float, seed: int, epoch: int, layer: int) -> np.ndarray:
    # Counter-based generator: mask depends only on (seed, epoch, layer).
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (epoch << 8) | layer], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return (gen.random(shape) >= rate).astype(np.float64)


def _forward_cache(model: GnnModel, conv: sp.csr_matrix, x: np.ndarray,
                   train_mode: bool, seed: int, epoch: int):
    x = np.asarray(x, dtype=np.float64)
    if model.arch == "sgc":
        prop = x
        for _ in range(model.layers):
            prop = conv @ prop
        logits = prop @ model.weights[0]
        return logits, {"prop": [prop], "pre": [logits], "masks": [None]}
    rate = model.dropout_rate
    h = x
    prop, pre, masks = [], [], []
    n_layers = len(model.weights)
    for l, w in enumerate(model.weights):
        hc = conv @ h
        s = hc @ w
        prop.append(hc)
        pre.append(s)
        if l < n_layers - 1:
            a = np.maximum(s, 0.0)
            if train_mode and rate > 0.0:
                mask = _dropout_mask(a.shape, rate, seed, epoch, l)
                a = a * mask / (1.0 - rate)
                masks.append(mask)
            else:
                masks.append(None)
            h = a
        else:
            masks.append(None)
    return pre[-1], {"prop": prop, "pre": pre, "masks": masks}


def forward(model: GnnModel, conv: sp.csr_matrix, x: np.ndarray,
            train_mode: bool = False, seed: int = 0, epoch: int = 0) -> np.ndarray:
    """Logits, shape (n, K). Dropout fires only in train mode (gcn)."""
    if x.shape[1] != model.weights[0].shape[0]:
        raise ValueError(
            f"feature dim {x.shape[1]} != weight fan-in {model.weights[0].shape[0]}"
        )
    logits, _ = _forward_cache(model, conv, x, train_mode, seed, epoch)
    return logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def weighted_loss(logits: np.ndarray, labels: np.ndarray, train_ids: np.ndarray,
                  weights: np.ndarray | None = None) -> float:
    """Weighted softmax cross-entropy over the training rows."""
    labels = np.asarray(labels)
    y = labels[train_ids]
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise ValueError("label out of range for logits")
    if weights is None:
        weights = np.full(len(train_ids), 1.0 / len(train_ids))
    logp = log_softmax(logits[train_ids])
    return float(-(weights * logp[np.arange(len(train_ids)), y]).sum())


def loss_and_grads(model: GnnModel, conv: sp.csr_matrix, x: np.ndarray,
                   labels: np.ndarray, train_ids: np.ndarray,
                   weights: np.ndarray | None = None, weight_decay: float = 0.0,
                   train_mode: bool = False, seed: int = 0, epoch: int = 0):
    """Loss (incl. wd * ||W||^2 per layer) and exact gradients for every W."""
    n = x.shape[0]
    if weights is None:
        weights = np.full(len(train_ids), 1.0 / len(train_ids))
    logits, cache = _forward_cache(model, conv, x, train_mode, seed, epoch)
    loss = weighted_loss(logits, labels, train_ids, weights)
    if weight_decay > 0.0:
        loss += weight_decay * sum(float((w ** 2).sum()) for w in model.weights)

    y = np.asarray(labels)[train_ids]
    g = np.zeros_like(logits)
    probs = softmax(logits[train_ids])
    probs[np.arange(len(train_ids)), y] -= 1.0
    g[train_ids] = probs * weights[:, None]

    grads = [None] * len(model.weights)
    ds = g
    rate = model.dropout_rate
    for l in range(len(model.weights) - 1, -1, -1):
        grads[l] = cache["prop"][l].T @ ds
        if weight_decay > 0.0:
            grads[l] = grads[l] + 2.0 * weight_decay * model.weights[l]
        if l > 0:
            dhc = ds @ model.weights[l].T
            dh = conv @ dhc  # conv is symmetric
            mask = cache["masks"][l - 1]
            if mask is not None:
                dh = dh * mask / (1.0 - rate)
            ds = dh * (cache["pre"][l - 1] > 0.0)
    return loss, grads, logits


def _accuracy(logits: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> float:
    pred = logits[ids].argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)[ids]))


def _conv_for(data) -> sp.csr_matrix:
    if isinstance(data, TrainingGraph):
        return build_conv(data.adjacency, data.conv_degrees)
    return build_conv(data.adjacency, data.degrees)


def train(model: GnnModel, data, cfg: TrainConfig, val_graph: GraphBundle | None = None):
    """Full-batch Adam training; returns (model, history).

    `data` is a GraphBundle (transductive) or TrainingGraph (coreset training
    with sample weights). History rows are (epoch, loss, train_acc, val_acc);
    val_acc is NaN when no validation graph is supplied.
    """
    train_ids = np.asarray(data.train_ids if isinstance(data, TrainingGraph)
                           else data.splits["train"])
    if train_ids.size == 0:
        raise ValueError("train split is empty")
    weights = cfg.sample_weights
    if weights is None and isinstance(data, TrainingGraph):
        weights = data.weights
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if (weights < 0).any():
            raise ValueError("sample weights must be nonnegative")
        total = weights.sum()
        if not np.isclose(total, 1.0, atol=1e-6):
            raise ValueError("sample weights must sum to 1")
        weights = weights / total

    conv = _conv_for(data)
    x = np.asarray(data.features, dtype=np.float64)
    labels = data.labels
    wd = cfg.weight_decay if not cfg.decoupled_wd else 0.0

    m_state = [np.zeros_like(w) for w in model.weights]
    v_state = [np.zeros_like(w) for w in model.weights]
    history = []
    for epoch in range(cfg.epochs):
        loss, grads, logits = loss_and_grads(
            model, conv, x, labels, train_ids, weights,
            weight_decay=wd, train_mode=True, seed=cfg.seed, epoch=epoch,
        )
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged at epoch {epoch}: loss={loss}")
        t = epoch + 1
        for w, g_w, m, v in zip(model.weights, grads, m_state, v_state):
            m[:] = ADAM_B1 * m + (1 - ADAM_B1) * g_w
            v[:] = ADAM_B2 * v + (1 - ADAM_B2) * g_w ** 2
            m_hat = m / (1 - ADAM_B1 ** t)
            v_hat = v / (1 - ADAM_B2 ** t)
            w -= cfg.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            if cfg.decoupled_wd and cfg.weight_decay > 0.0:
                w -= cfg.lr * cfg.weight_decay * w
        if epoch % cfg.eval_interval == 0 or epoch == cfg.epochs - 1:
            train_acc = _accuracy(logits, labels, train_ids)
            val_acc = float("nan")
            if val_graph is not None and val_graph.splits["val"].size:
                val_acc = evaluate(model, val_graph, "val")
            history.append((epoch, loss, train_acc, val_acc))
    return model, history


def evaluate(model: GnnModel, bundle: GraphBundle, split: str) -> float:
    """Argmax accuracy on a split of the (original) graph; dropout off."""
    ids = bundle.splits[split] if isinstance(split, str) else np.asarray(split)
    if len(ids) == 0:
        raise ValueError("empty evaluation split")
    conv = build_conv(bundle.adjacency, bundle.degrees)
    logits = forward(model, conv, bundle.features.astype(np.float64))
    return _accuracy(logits, bundle.labels, ids)


def save_model(path, model: GnnModel) -> None:
    arrays = {f"w{i}": w for i, w in enumerate(model.weights)}
    np.savez(path, arch=model.arch, layers=model.layers,
             hidden_dim=model.hidden_dim, dropout_rate=model.dropout_rate,
             n_weights=len(model.weights), **arrays)


def load_model(path) -> GnnModel:
    blob = np.load(path, allow_pickle=False)
    weights = [blob[f"w{i}"] for i in range(int(blob["n_weights"]))]
    return GnnModel(arch=str(blob["arch"]), weights=weights,
                    layers=int(blob["layers"]), hidden_dim=int(blob["hidden_dim"]),
                    dropout_rate=float(blob["dropout_rate"]))
