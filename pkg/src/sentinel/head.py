"""Fusion classifier head.

Concatenates the pooled embedding with the heuristic bits and maps the
result through one hidden layer with ReLU and a two-way softmax. The head
is small enough to train on CPU; everything runs at 64-bit precision so
the gradient check against finite differences stays tight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import SemanticEmbedding
from .rules import HeuristicFeatureVector

__all__ = [
    "FusedFeature",
    "FusionHeadParams",
    "TrainConfig",
    "Prediction",
    "TrainingDiverged",
    "ModelFileError",
    "EarlyStopper",
    "fuse",
    "forward",
    "loss",
    "backward",
    "init_params",
    "train",
    "save_params",
    "load_params",
]

MODEL_FORMAT_VERSION = 1

BENIGN, INJECTION = 0, 1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


class ModelFileError(ValueError):
    """Model file is unreadable, malformed, or inconsistent."""


@dataclass(frozen=True)
class FusedFeature:
    """Concatenation [embedding | heuristic bits], in that order."""

    values: np.ndarray
    emb_dim: int

    @property
    def n_heur(self) -> int:
        return self.values.shape[0] - self.emb_dim

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        return self.values[: self.emb_dim], self.values[self.emb_dim :]


@dataclass
class FusionHeadParams:
    W1: np.ndarray  # (hidden, emb_dim + n_heur)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (2, hidden)
    b2: np.ndarray  # (2,)
    emb_dim: int
    n_heur: int

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.emb_dim + self.n_heur

    def check(self) -> None:
        d = self.input_dim
        h = self.hidden
        if self.W1.shape != (h, d) or self.b1.shape != (h,):
            raise ModelFileError(f"layer-1 shapes inconsistent: {self.W1.shape}")
        if self.W2.shape != (2, h) or self.b2.shape != (2,):
            raise ModelFileError(f"layer-2 shapes inconsistent: {self.W2.shape}")
        for arr in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ModelFileError("parameters contain non-finite values")

    def copy(self) -> "FusionHeadParams":
        return FusionHeadParams(
            W1=self.W1.copy(),
            b1=self.b1.copy(),
            W2=self.W2.copy(),
            b2=self.b2.copy(),
            emb_dim=self.emb_dim,
            n_heur=self.n_heur,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; ``paper_preset`` mirrors full fine-tuning runs."""

    learning_rate: float = 1e-3
    batch_size: int = 16
    weight_decay: float = 0.02
    patience: int = 3
    max_epochs: int = 100
    seed: int = 0
    hidden: int = 256

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size, max_epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    @staticmethod
    def paper_preset(**overrides) -> "TrainConfig":
        base = dict(learning_rate=2e-5, batch_size=16, weight_decay=0.02, patience=3)
        base.update(overrides)
        return TrainConfig(**base)


@dataclass(frozen=True)
class Prediction:
    p_benign: float
    p_injection: float
    label: int
    threshold: float = 0.5

    def probs(self) -> np.ndarray:
        return np.array([self.p_benign, self.p_injection])


def fuse(embedding: SemanticEmbedding, heur: HeuristicFeatureVector) -> FusedFeature:
    """Concatenate the two channels; bits become 0.0/1.0 floats."""
    emb = np.asarray(embedding.values, dtype=np.float64)
    bits = np.asarray(heur.bits, dtype=np.float64)
    return FusedFeature(values=np.concatenate([emb, bits]), emb_dim=emb.shape[0])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _forward_raw(x: np.ndarray, params: FusionHeadParams) -> tuple[np.ndarray, ...]:
    z1 = x @ params.W1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ params.W2.T + params.b2
    return z1, a1, _softmax(logits)


def forward(
    x: FusedFeature | np.ndarray,
    params: FusionHeadParams,
    threshold: float = 0.5,
) -> Prediction:
    """Class probabilities for one fused feature vector."""
    vec = x.values if isinstance(x, FusedFeature) else np.asarray(x, dtype=np.float64)
    if vec.shape != (params.input_dim,):
        raise ValueError(
            f"input has {vec.shape[0]} values, head expects {params.input_dim}"
        )
    _, _, probs = _forward_raw(vec, params)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite probabilities in forward pass")
    p_inj = float(probs[INJECTION])
    return Prediction(
        p_benign=float(probs[BENIGN]),
        p_injection=p_inj,
        label=INJECTION if p_inj >= threshold else BENIGN,
        threshold=threshold,
    )


def loss(pred: Prediction, label: int) -> float:
    """Cross-entropy of the true class, clamped at p >= 1e-12."""
    p = pred.p_injection if label == INJECTION else pred.p_benign
    return -float(np.log(max(p, 1e-12)))


def _grads_batch(
    X: np.ndarray, y: np.ndarray, params: FusionHeadParams
) -> tuple[dict[str, np.ndarray], float]:
    """Mean cross-entropy gradients over a batch. Exact analytic backprop."""
    n = X.shape[0]
    z1, a1, probs = _forward_raw(X, params)
    eps_p = np.clip(probs[np.arange(n), y], 1e-12, None)
    mean_loss = float(-np.log(eps_p).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dW2 = dlogits.T @ a1
    db2 = dlogits.sum(axis=0)
    da1 = dlogits @ params.W2
    dz1 = da1 * (z1 > 0.0)
    dW1 = dz1.T @ X
    db1 = dz1.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}, mean_loss


def backward(
    x: FusedFeature | np.ndarray, label: int, params: FusionHeadParams
) -> dict[str, np.ndarray]:
    """Gradients of ``loss(forward(x), label)`` with respect to each parameter."""
    vec = x.values if isinstance(x, FusedFeature) else np.asarray(x, dtype=np.float64)
    grads, _ = _grads_batch(vec[None, :], np.array([label]), params)
    return grads


def init_params(
    emb_dim: int, n_heur: int, hidden: int = 256, seed: int = 0
) -> FusionHeadParams:
    """Uniform ±1/sqrt(fan_in) initialization, reproducible per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    d = emb_dim + n_heur
    lim1 = 1.0 / np.sqrt(d)
    lim2 = 1.0 / np.sqrt(hidden)
    return FusionHeadParams(
        W1=rng.uniform(-lim1, lim1, size=(hidden, d)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-lim2, lim2, size=(2, hidden)),
        b2=np.zeros(2),
        emb_dim=emb_dim,
        n_heur=n_heur,
    )


class EarlyStopper:
    """Stop after ``patience`` consecutive non-improving validation losses.

    Tracks the best parameters seen; ``update`` returns True when training
    should stop. Never reports parameters worse than the best observed.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_params: FusionHeadParams | None = None
        self.best_epoch = 0
        self.stale = 0

    def update(self, val_loss: float, params: FusionHeadParams, epoch: int) -> bool:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_params = params.copy()
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _dataset(pairs) -> tuple[np.ndarray, np.ndarray, int | None]:
    """Accepts (X, y) arrays or (feature, label) pairs; returns X, y, emb_dim."""
    if isinstance(pairs, tuple) and len(pairs) == 2:
        X, y = pairs
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64), None
    feats = [p for p, _ in pairs]
    emb_dim = feats[0].emb_dim if feats and isinstance(feats[0], FusedFeature) else None
    X = np.stack(
        [p.values if isinstance(p, FusedFeature) else np.asarray(p) for p in feats]
    )
    y = np.asarray([label for _, label in pairs], dtype=np.int64)
    return X.astype(np.float64), y, emb_dim


def _mean_loss(X: np.ndarray, y: np.ndarray, params: FusionHeadParams) -> float:
    _, _, probs = _forward_raw(X, params)
    p_true = np.clip(probs[np.arange(X.shape[0]), y], 1e-12, None)
    return float(-np.log(p_true).mean())


def train(
    train_set,
    val_set,
    config: TrainConfig = TrainConfig(),
) -> tuple[FusionHeadParams, list[dict]]:
    """Adam with decoupled weight decay and early stopping on validation loss.

    ``train_set``/``val_set`` are either ``(X, y)`` arrays or sequences of
    ``(feature, label)`` pairs. Stops when validation loss has not improved
    for ``config.patience`` consecutive epochs (or at ``max_epochs``) and
    returns the parameters from the best epoch plus a per-epoch log.
    Deterministic for a fixed seed.
    """
    X_train, y_train, emb_dim = _dataset(train_set)
    X_val, y_val, _ = _dataset(val_set)
    if X_train.size == 0 or X_val.size == 0:
        raise ValueError("training and validation sets must be non-empty")
    if X_val.shape[1] != X_train.shape[1]:
        raise ValueError("train and validation feature widths differ")

    if emb_dim is None:
        emb_dim = X_train.shape[1]
    params = init_params(
        emb_dim=emb_dim,
        n_heur=X_train.shape[1] - emb_dim,
        hidden=config.hidden,
        seed=config.seed,
    )

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    state = {
        k: {"m": np.zeros_like(getattr(params, k)), "v": np.zeros_like(getattr(params, k))}
        for k in ("W1", "b1", "W2", "b2")
    }
    step = 0
    rng = np.random.Generator(np.random.PCG64(config.seed))
    stopper = EarlyStopper(config.patience)
    log: list[dict] = []

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(X_train.shape[0])
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            grads, batch_loss = _grads_batch(X_train[idx], y_train[idx], params)
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            epoch_losses.append(batch_loss)
            step += 1
            for key in ("W1", "b1", "W2", "b2"):
                g = grads[key]
                s = state[key]
                s["m"] = beta1 * s["m"] + (1 - beta1) * g
                s["v"] = beta2 * s["v"] + (1 - beta2) * g * g
                m_hat = s["m"] / (1 - beta1**step)
                v_hat = s["v"] / (1 - beta2**step)
                p = getattr(params, key)
                if config.weight_decay > 0 and key in ("W1", "W2"):
                    p -= config.learning_rate * config.weight_decay * p
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

        val_loss = _mean_loss(X_val, y_val, params)
        stop = stopper.update(val_loss, params, epoch)
        log.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_loss": val_loss,
                "improved": stopper.best_epoch == epoch,
            }
        )
        if stop:
            break

    best_params = stopper.best_params
    assert best_params is not None
    best_params.check()
    return best_params, log


def save_params(
    params: FusionHeadParams,
    path: str | Path,
    rule_pack_version: str = "",
    provider: dict | None = None,
) -> None:
    """Write the model file; ``load_params`` reproduces the params exactly."""
    params.check()
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "d": params.emb_dim,
        "n_heur": params.n_heur,
        "hidden": params.hidden,
        "w1": params.W1.ravel().tolist(),
        "b1": params.b1.tolist(),
        "w2": params.W2.ravel().tolist(),
        "b2": params.b2.tolist(),
        "rule_pack_version": rule_pack_version,
        "provider": provider or {},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_params(
    path: str | Path,
    expect_emb_dim: int | None = None,
    expect_n_heur: int | None = None,
    expect_rule_pack_version: str | None = None,
) -> tuple[FusionHeadParams, dict]:
    """Read a model file back; raises ModelFileError on any inconsistency."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file {path} is not valid JSON: {exc}") from exc

    try:
        if doc["format_version"] != MODEL_FORMAT_VERSION:
            raise ModelFileError(
                f"unsupported model format {doc['format_version']!r}"
            )
        d, n_heur, hidden = doc["d"], doc["n_heur"], doc["hidden"]
        params = FusionHeadParams(
            W1=np.asarray(doc["w1"], dtype=np.float64).reshape(hidden, d + n_heur),
            b1=np.asarray(doc["b1"], dtype=np.float64),
            W2=np.asarray(doc["w2"], dtype=np.float64).reshape(2, hidden),
            b2=np.asarray(doc["b2"], dtype=np.float64),
            emb_dim=d,
            n_heur=n_heur,
        )
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"model file {path} is malformed: {exc}") from exc

    params.check()
    if expect_emb_dim is not None and params.emb_dim != expect_emb_dim:
        raise ModelFileError(
            f"model embedding dim {params.emb_dim} != provider dim {expect_emb_dim}"
        )
    if expect_n_heur is not None and params.n_heur != expect_n_heur:
        raise ModelFileError(
            f"model has {params.n_heur} heuristic slots, rule pack has {expect_n_heur}"
        )
    if (
        expect_rule_pack_version is not None
        and doc.get("rule_pack_version")
        and doc["rule_pack_version"] != expect_rule_pack_version
    ):
        raise ModelFileError(
            f"model was trained with rule pack {doc['rule_pack_version']!r}, "
            f"loaded pack is {expect_rule_pack_version!r}"
        )
    meta = {
        "rule_pack_version": doc.get("rule_pack_version", ""),
        "provider": doc.get("provider", {}),
    }
    return params, meta
