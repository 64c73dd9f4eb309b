"""Sparse linear concept model over image-text cosine similarities.

The detector scores an image as a linear combination of its cosine
similarities to a fixed concept vocabulary, gated elementwise by a
per-sample Bernoulli relevance mask. The mask posterior is a factorized
Bernoulli whose logits are a learned linear map of the (row-normalized)
image embedding; a Bernoulli(alpha) prior plus a KL term pushes the
posterior toward sparsity. Training draws relaxed masks with the
Gumbel-sigmoid (concrete) trick at a fixed temperature; inference uses
the expected mask, i.e. the posterior probabilities themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .datastore import EmbeddingDataset, Vocabulary
from .numerics import normalize_rows, require_finite, sigmoid, softplus
from .optim import AdamW
from .tensorfile import read_tensor, write_tensor

MODE_TRAIN_SAMPLE = "train_sample"
MODE_EXPECTED = "expected"

_Q_CLAMP = 1e-7


class ConceptTrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class ConceptTrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 4000
    patience: int = 10  # in validation checks
    val_every: int = 40
    seed: int = 123
    prior_activation: float = 1e-4  # alpha
    temperature: float = 0.1  # tau
    kl_weight: float = 1e-4  # beta

    def validate(self) -> None:
        if not 0.0 < self.prior_activation < 1.0:
            raise ValueError(f"prior_activation must be in (0, 1), got {self.prior_activation}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be non-negative")
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "val_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ConceptModel:
    concept_weights: np.ndarray  # (n, 1)
    gate_weights: np.ndarray  # (n, p)
    prior_activation: float = 1e-4
    temperature: float = 0.1
    kl_weight: float = 1e-4
    vocabulary_name: str = ""
    vocabulary_sha256: str = ""

    @property
    def n_concepts(self) -> int:
        return self.concept_weights.shape[0]

    @property
    def p(self) -> int:
        return self.gate_weights.shape[1]


def similarity_matrix(images: np.ndarray, vocabulary: Vocabulary) -> np.ndarray:
    """Cosine similarities, image rows against concept rows."""
    img = normalize_rows(images, what="image embedding")
    concepts = normalize_rows(np.asarray(vocabulary.embeddings, dtype=np.float64), what="concept embedding")
    return img @ concepts.T


def mask_posterior(images: np.ndarray, gate_weights: np.ndarray) -> np.ndarray:
    """Per-concept activation probabilities sigma(img_norm @ gates.T)."""
    img = normalize_rows(images, what="image embedding")
    gates = np.asarray(gate_weights, dtype=np.float64)
    require_finite(gates, "gate weights")
    return sigmoid(img @ gates.T)


def sample_relaxed_mask(
    posterior_logits: np.ndarray, temperature: float, rng: np.random.Generator
) -> np.ndarray:
    """Gumbel-sigmoid draw: sigma((logits + logistic noise) / tau)."""
    u = np.clip(rng.random(posterior_logits.shape), 1e-12, 1.0 - 1e-12)
    noise = np.log(u) - np.log1p(-u)
    return sigmoid((posterior_logits + noise) / temperature)


def concept_forward(
    model: ConceptModel,
    images: np.ndarray,
    vocabulary: Vocabulary,
    mode: str = MODE_EXPECTED,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (logits, posterior q, effective mask).

    ``expected`` uses the posterior probabilities as the mask, which is
    deterministic; ``train_sample`` draws a relaxed mask and needs rng.
    """
    if len(vocabulary) != model.n_concepts:
        raise ValueError(
            f"vocabulary has {len(vocabulary)} terms, model expects {model.n_concepts}"
        )
    if vocabulary.p != model.p:
        raise ValueError(f"vocabulary dimension {vocabulary.p} != model dimension {model.p}")
    img = normalize_rows(images, what="image embedding")
    sims = img @ normalize_rows(np.asarray(vocabulary.embeddings, dtype=np.float64)).T
    logits_q = img @ model.gate_weights.T
    q = sigmoid(logits_q)
    if mode == MODE_EXPECTED:
        mask = q
    elif mode == MODE_TRAIN_SAMPLE:
        if rng is None:
            raise ValueError("train_sample mode needs a seeded rng")
        mask = sample_relaxed_mask(logits_q, model.temperature, rng)
    else:
        raise ValueError(f"unknown forward mode {mode!r}")
    logits = (sims * mask) @ model.concept_weights
    return logits[:, 0], q, mask


def kl_bernoulli(q, alpha: float) -> np.ndarray:
    """Elementwise KL(Bernoulli(q) || Bernoulli(alpha)), q clamped away
    from {0, 1} before the logs."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    qc = np.clip(np.asarray(q, dtype=np.float64), _Q_CLAMP, 1.0 - _Q_CLAMP)
    return qc * np.log(qc / alpha) + (1.0 - qc) * np.log((1.0 - qc) / (1.0 - alpha))


def _loss_from_parts(
    model: ConceptModel,
    sims: np.ndarray,
    img_norm: np.ndarray,
    labels: np.ndarray,
    mode: str,
    rng: np.random.Generator | None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Negative-ELBO value and analytic gradients given precomputed
    similarities and normalized images."""
    m = sims.shape[0]
    y = np.asarray(labels, dtype=np.float64).ravel()
    wc = model.concept_weights[:, 0]
    logits_q = img_norm @ model.gate_weights.T
    q = sigmoid(logits_q)
    if mode == MODE_EXPECTED:
        mask = q
    else:
        mask = sample_relaxed_mask(logits_q, model.temperature, rng)
    gated = sims * mask
    a = gated @ wc
    bce = float(np.mean(softplus(a) - y * a))
    kl = kl_bernoulli(q, model.prior_activation)
    total = bce + model.kl_weight * float(np.sum(kl)) / m

    da = (sigmoid(a) - y) / m  # (m,)
    grad_wc = gated.T @ da  # (n,)
    d_mask = da[:, None] * sims * wc[None, :]  # (m, n)
    # KL path; the clamp zeroes the gradient outside its interior.
    qc = np.clip(q, _Q_CLAMP, 1.0 - _Q_CLAMP)
    interior = (q > _Q_CLAMP) & (q < 1.0 - _Q_CLAMP)
    alpha = model.prior_activation
    d_q_kl = (model.kl_weight / m) * (np.log(qc / alpha) - np.log((1.0 - qc) / (1.0 - alpha)))
    d_q_kl = np.where(interior, d_q_kl, 0.0)
    if mode == MODE_EXPECTED:
        d_logits_q = (d_mask + d_q_kl) * q * (1.0 - q)
    else:
        d_logits_q = d_mask * mask * (1.0 - mask) / model.temperature + d_q_kl * q * (1.0 - q)
    grad_gates = d_logits_q.T @ img_norm  # (n, p)
    return total, {"concept_weights": grad_wc[:, None], "gate_weights": grad_gates}


def concept_loss(
    model: ConceptModel,
    images: np.ndarray,
    vocabulary: Vocabulary,
    labels: np.ndarray,
    mode: str = MODE_EXPECTED,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """BCE on the masked concept logits plus the weighted mask KL."""
    if mode == MODE_TRAIN_SAMPLE and rng is None:
        raise ValueError("train_sample mode needs a seeded rng")
    img = normalize_rows(images, what="image embedding")
    sims = img @ normalize_rows(np.asarray(vocabulary.embeddings, dtype=np.float64)).T
    return _loss_from_parts(model, sims, img, np.asarray(labels), mode, rng)


@dataclass
class ConceptEpochLog:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class ConceptTrainResult:
    model: ConceptModel
    log: list[ConceptEpochLog]
    best_epoch: int
    best_val_loss: float
    config: ConceptTrainConfig | None = field(repr=False, default=None)


def train_concept(
    dataset: EmbeddingDataset, vocabulary: Vocabulary, config: ConceptTrainConfig
) -> ConceptTrainResult:
    """Fit concept and gate weights on the train split.

    Validation (expected-mask loss on the full val split) runs every
    ``val_every`` epochs; early stopping counts stale validation checks
    and the best weights are restored at the end.
    """
    config.validate()
    if vocabulary.p != dataset.p:
        raise ValueError(f"vocabulary dimension {vocabulary.p} != dataset p {dataset.p}")
    train_view = dataset.select("train")
    val_view = dataset.select("val")
    if len(train_view) == 0:
        raise ValueError("empty train split")
    if len(val_view) == 0:
        raise ValueError("empty val split")

    concepts = normalize_rows(np.asarray(vocabulary.embeddings, dtype=np.float64))
    img_train = normalize_rows(train_view.joint.astype(np.float64), what="train embedding")
    img_val = normalize_rows(val_view.joint.astype(np.float64), what="val embedding")
    sims_train = img_train @ concepts.T
    sims_val = img_val @ concepts.T
    y_train = train_view.labels.astype(np.float64)
    y_val = val_view.labels.astype(np.float64)

    n = len(vocabulary)
    model = ConceptModel(
        concept_weights=np.zeros((n, 1)),
        gate_weights=np.zeros((n, dataset.p)),
        prior_activation=config.prior_activation,
        temperature=config.temperature,
        kl_weight=config.kl_weight,
        vocabulary_name=vocabulary.name,
        vocabulary_sha256=vocabulary.sha256(),
    )
    params = {"concept_weights": model.concept_weights, "gate_weights": model.gate_weights}
    optimizer = AdamW(
        params,
        lr=config.learning_rate,
        betas=config.betas,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )
    rng = np.random.default_rng(config.seed)

    log: list[ConceptEpochLog] = []
    best_val = np.inf
    best_epoch = 0
    best_weights = {k: v.copy() for k, v in params.items()}
    stale = 0
    recent_train: list[float] = []
    m = len(train_view)
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(m)
        for start in range(0, m, config.batch_size):
            idx = perm[start : start + config.batch_size]
            value, grads = _loss_from_parts(
                model, sims_train[idx], img_train[idx], y_train[idx], MODE_TRAIN_SAMPLE, rng
            )
            if not np.isfinite(value):
                raise ConceptTrainingDiverged(epoch)
            optimizer.step(grads)
            recent_train.append(value)
        if epoch % config.val_every == 0 or epoch == config.max_epochs:
            val_loss, _ = _loss_from_parts(model, sims_val, img_val, y_val, MODE_EXPECTED, None)
            if not np.isfinite(val_loss):
                raise ConceptTrainingDiverged(epoch)
            log.append(ConceptEpochLog(epoch, float(np.mean(recent_train)), float(val_loss)))
            recent_train = []
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
    return ConceptTrainResult(
        model=model, log=log, best_epoch=best_epoch, best_val_loss=best_val, config=config
    )


def write_train_log(log: Sequence[ConceptEpochLog], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for row in log:
        lines.append(f"{row.epoch},{row.train_loss:.8f},{row.val_loss:.8f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_checkpoint(result: ConceptTrainResult, out_dir: str | Path, *, dataset_name: str = "") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = result.model
    write_tensor(out / "concept_weights.sidt", model.concept_weights.astype(np.float32))
    write_tensor(out / "gate_weights.sidt", model.gate_weights.astype(np.float32))
    cfg = asdict(result.config) if result.config is not None else {}
    if "betas" in cfg:
        cfg["betas"] = list(cfg["betas"])
    meta = {
        "model_kind": "concept",
        "n_concepts": model.n_concepts,
        "input_dim": model.p,
        "prior_activation": model.prior_activation,
        "temperature": model.temperature,
        "kl_weight": model.kl_weight,
        "vocabulary_name": model.vocabulary_name,
        "vocabulary_sha256": model.vocabulary_sha256,
        "config": cfg,
        "final_epoch": result.log[-1].epoch if result.log else 0,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "dataset_name": dataset_name,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(ckpt_dir: str | Path) -> tuple[ConceptModel, dict]:
    ckpt = Path(ckpt_dir)
    meta = json.loads((ckpt / "meta.json").read_text(encoding="utf-8"))
    model = ConceptModel(
        concept_weights=read_tensor(ckpt / "concept_weights.sidt").astype(np.float64),
        gate_weights=read_tensor(ckpt / "gate_weights.sidt").astype(np.float64),
        prior_activation=float(meta["prior_activation"]),
        temperature=float(meta["temperature"]),
        kl_weight=float(meta["kl_weight"]),
        vocabulary_name=meta.get("vocabulary_name", ""),
        vocabulary_sha256=meta.get("vocabulary_sha256", ""),
    )
    require_finite(model.concept_weights, "checkpoint weights")
    require_finite(model.gate_weights, "checkpoint weights")
    return model, meta
