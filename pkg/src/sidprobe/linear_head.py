"""Linear detector heads on frozen encoder embeddings.

Two modes share one model type:

* ``orthogonal_head``: two bias-free linear maps on the d-dim hidden
  state. The first projects to k features whose batch activations are
  pushed toward decorrelation by a Frobenius penalty on the
  column-normalized Gram matrix; the second maps the k features to a
  single logit.
* ``linear_probe``: a single bias-free map from the p-dim joint
  embedding straight to the logit.

Training uses Adam with L2 weight decay, label-smoothed BCE, seeded
shuffling, orthogonal initialization, and early stopping on the
validation loss with best-weight restore. All arithmetic is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .datastore import EmbeddingDataset
from .numerics import orthogonal_init, require_finite, sigmoid, softplus
from .optim import Adam
from .tensorfile import read_tensor, write_tensor

MODE_ORTHOGONAL = "orthogonal_head"
MODE_PROBE = "linear_probe"

_COLUMN_NORM_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    ortho_weight: float = 0.33
    label_smoothing: float = 0.1
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 5
    seed: int = 123
    k: int = 8

    def validate(self) -> None:
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ValueError(f"label_smoothing must be in [0, 0.5), got {self.label_smoothing}")
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.ortho_weight < 0 or self.weight_decay < 0:
            raise ValueError("ortho_weight and weight_decay must be non-negative")


@dataclass
class LinearHeadModel:
    mode: str
    feature_weights: np.ndarray | None  # (d, k); None in probe mode
    logit_weights: np.ndarray  # (k, 1), or (d_in, 1) in probe mode

    @property
    def input_dim(self) -> int:
        if self.mode == MODE_ORTHOGONAL:
            return self.feature_weights.shape[0]
        return self.logit_weights.shape[0]

    @property
    def k(self) -> int:
        return self.feature_weights.shape[1] if self.mode == MODE_ORTHOGONAL else 0


def forward(model: LinearHeadModel, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (activations, logits) for a batch of input rows."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"inputs are {x.shape}, model expects (*, {model.input_dim})")
    if model.mode == MODE_PROBE:
        logits = x @ model.logit_weights
        return np.empty((x.shape[0], 0)), logits[:, 0]
    activations = x @ model.feature_weights
    logits = activations @ model.logit_weights
    return activations, logits[:, 0]


def orthogonality_penalty(activations: np.ndarray) -> float:
    """Squared Frobenius distance between the column-normalized
    activation Gram matrix and the identity."""
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise ValueError(f"expected a batch of feature rows, got shape {a.shape}")
    if a.shape[0] < 2:
        raise ValueError("orthogonality penalty needs a batch of at least 2 rows")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms < _COLUMN_NORM_FLOOR):
        j = int(np.flatnonzero(norms < _COLUMN_NORM_FLOOR)[0])
        raise ValueError(f"normalization-degenerate activation column {j} (norm < {_COLUMN_NORM_FLOOR})")
    unit = a / norms[None, :]
    gram = unit.T @ unit
    diff = np.eye(a.shape[1]) - gram
    return float(np.sum(diff * diff))


def smoothed_bce(logits, labels, label_smoothing: float) -> float:
    """Mean BCE against targets y(1-eps) + (1-y)eps, from raw logits."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if z.shape != y.shape:
        raise ValueError("logits and labels disagree in length")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0 or 1")
    require_finite(z, "logits")
    t = y * (1.0 - label_smoothing) + (1.0 - y) * label_smoothing
    return float(np.mean(softplus(z) - t * z))


def loss(
    model: LinearHeadModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Total loss and analytic gradients for one batch.

    Orthogonal mode: label-smoothed BCE plus ortho_weight times the
    activation-decorrelation penalty (weight decay is the optimizer's
    business, not the loss's). Probe mode: the BCE term alone.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if model.mode == MODE_ORTHOGONAL and x.shape[0] < 2:
        raise ValueError("orthogonal_head loss needs a batch of at least 2 rows")
    activations, z = forward(model, x)
    t = y * (1.0 - config.label_smoothing) + (1.0 - y) * config.label_smoothing
    n = x.shape[0]
    bce = float(np.mean(softplus(z) - t * z))
    dz = (sigmoid(z) - t) / n  # (n,)

    if model.mode == MODE_PROBE:
        grad_w = x.T @ dz[:, None]
        return bce, {"logit_weights": grad_w}

    total = bce
    d_act = dz[:, None] @ model.logit_weights.T  # (n, k)
    if config.ortho_weight != 0.0:
        norms = np.linalg.norm(activations, axis=0)
        if np.any(norms < _COLUMN_NORM_FLOOR):
            j = int(np.flatnonzero(norms < _COLUMN_NORM_FLOOR)[0])
            raise ValueError(
                f"normalization-degenerate activation column {j} (norm < {_COLUMN_NORM_FLOOR})"
            )
        unit = activations / norms[None, :]
        gram = unit.T @ unit
        diff = np.eye(activations.shape[1]) - gram
        total += config.ortho_weight * float(np.sum(diff * diff))
        # d penalty / d unit = 4 * unit @ (gram - I); pull back through
        # the per-column normalization a -> a / ||a||.
        d_unit = 4.0 * unit @ (gram - np.eye(activations.shape[1]))
        d_act_pen = (d_unit - unit * np.sum(unit * d_unit, axis=0)[None, :]) / norms[None, :]
        d_act = d_act + config.ortho_weight * d_act_pen

    grad_w1 = x.T @ d_act
    grad_w2 = activations.T @ dz[:, None]
    return total, {"feature_weights": grad_w1, "logit_weights": grad_w2}


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_penalty: float


@dataclass
class TrainResult:
    model: LinearHeadModel
    log: list[EpochLog]
    best_epoch: int
    best_val_loss: float
    config: TrainConfig | None = field(repr=False, default=None)


def init_model(mode: str, input_dim: int, k: int, seed: int) -> LinearHeadModel:
    """Deterministic orthogonal initialization for both layers."""
    rng = np.random.default_rng(seed)
    if mode == MODE_PROBE:
        return LinearHeadModel(mode=mode, feature_weights=None, logit_weights=orthogonal_init(input_dim, 1, rng))
    if mode != MODE_ORTHOGONAL:
        raise ValueError(f"unknown model mode {mode!r}")
    w1 = orthogonal_init(input_dim, k, rng)
    w2 = orthogonal_init(k, 1, rng)
    return LinearHeadModel(mode=mode, feature_weights=w1, logit_weights=w2)


def _inputs_for_mode(dataset: EmbeddingDataset, mode: str) -> np.ndarray:
    arr = dataset.hidden if mode == MODE_ORTHOGONAL else dataset.joint
    return np.asarray(arr, dtype=np.float64)


def _batches(n: int, batch_size: int, perm: np.ndarray):
    """Contiguous chunks of a permutation; a trailing single row is
    folded into the previous chunk so every batch supports the penalty."""
    starts = list(range(0, n, batch_size))
    for i, s in enumerate(starts):
        e = min(s + batch_size, n)
        if i + 1 == len(starts) - 1 and n - (s + batch_size) == 1:
            yield perm[s:]
            return
        yield perm[s:e]


def train(dataset: EmbeddingDataset, config: TrainConfig, mode: str = MODE_ORTHOGONAL) -> TrainResult:
    """Train a head on the dataset's train split, early-stopping on the
    full-batch validation loss. Deterministic given the config seed."""
    config.validate()
    train_view = dataset.select("train")
    val_view = dataset.select("val")
    if len(train_view) == 0:
        raise ValueError("empty train split")
    if len(val_view) == 0:
        raise ValueError("empty val split")

    x_train = _inputs_for_mode(train_view, mode)
    y_train = train_view.labels.astype(np.float64)
    x_val = _inputs_for_mode(val_view, mode)
    y_val = val_view.labels.astype(np.float64)

    model = init_model(mode, x_train.shape[1], config.k, config.seed)
    params = {"logit_weights": model.logit_weights}
    if mode == MODE_ORTHOGONAL:
        params["feature_weights"] = model.feature_weights
    optimizer = Adam(
        params,
        lr=config.learning_rate,
        betas=config.betas,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )
    rng = np.random.default_rng(config.seed)

    log: list[EpochLog] = []
    best_val = np.inf
    best_epoch = 0
    best_weights: dict[str, np.ndarray] = {}
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_view))
        batch_losses = []
        for idx in _batches(len(train_view), config.batch_size, perm):
            value, grads = loss(model, x_train[idx], y_train[idx], config)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            optimizer.step(grads)
            batch_losses.append(value)
        val_loss, _ = loss(model, x_val, y_val, config)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch)
        if mode == MODE_ORTHOGONAL:
            val_act, _ = forward(model, x_val)
            val_penalty = orthogonality_penalty(val_act)
        else:
            val_penalty = 0.0
        log.append(EpochLog(epoch, float(np.mean(batch_losses)), float(val_loss), float(val_penalty)))
        if val_loss < best_val:
            best_val = float(val_loss)
            best_epoch = epoch
            best_weights = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    for name, value in best_weights.items():
        params[name][...] = value
    return TrainResult(model=model, log=log, best_epoch=best_epoch, best_val_loss=best_val, config=config)


def write_train_log(log: Sequence[EpochLog], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss,penalty"]
    for row in log:
        lines.append(f"{row.epoch},{row.train_loss:.8f},{row.val_loss:.8f},{row.val_penalty:.8f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_checkpoint(
    result: TrainResult,
    out_dir: str | Path,
    *,
    dataset_name: str = "",
) -> None:
    """Write weight tensors plus a metadata record into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = result.model
    write_tensor(out / "logit_weights.sidt", model.logit_weights.astype(np.float32))
    if model.mode == MODE_ORTHOGONAL:
        write_tensor(out / "feature_weights.sidt", model.feature_weights.astype(np.float32))
    cfg = asdict(result.config) if result.config is not None else {}
    if "betas" in cfg:
        cfg["betas"] = list(cfg["betas"])
    meta = {
        "model_kind": model.mode,
        "input_dim": model.input_dim,
        "k": model.k,
        "config": cfg,
        "final_epoch": result.log[-1].epoch if result.log else 0,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "dataset_name": dataset_name,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(ckpt_dir: str | Path) -> tuple[LinearHeadModel, dict]:
    ckpt = Path(ckpt_dir)
    meta = json.loads((ckpt / "meta.json").read_text(encoding="utf-8"))
    mode = meta["model_kind"]
    logit_weights = read_tensor(ckpt / "logit_weights.sidt").astype(np.float64)
    feature_weights = None
    if mode == MODE_ORTHOGONAL:
        feature_weights = read_tensor(ckpt / "feature_weights.sidt").astype(np.float64)
    model = LinearHeadModel(mode=mode, feature_weights=feature_weights, logit_weights=logit_weights)
    require_finite(model.logit_weights, "checkpoint weights")
    return model, meta
