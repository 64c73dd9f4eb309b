"""Encoder backends producing hidden-state and joint-space embeddings.

Two implementations of one small interface:

* ``HFClipEncoder`` wraps a frozen vision-language checkpoint from the
  transformers hub (default ViT-L/14-336). The hidden state is the
  post-layernorm CLS vector of the final vision layer; the joint
  embedding is that vector pushed through the model's image projection
  head, which is also exported so downstream interpretation can reuse
  it. Heavyweight dependencies load lazily.
* ``StubEncoder`` is a deterministic, dependency-free stand-in for
  tests and demos: a fixed random projection of 8x8-downsampled pixels,
  with the same hidden -> projection -> joint structure, and text
  embeddings seeded from a digest of the text.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np
from PIL import Image

DEFAULT_ENCODER = "openai/clip-vit-large-patch14-336"
STUB_NAME = "stub"


class Encoder(Protocol):
    name: str
    hidden_dim: int
    joint_dim: int

    def encode_images(self, images: Sequence[Image.Image]) -> tuple[np.ndarray, np.ndarray]:
        """Return (hidden n x d, joint n x p) for a batch of images."""

    def projection(self) -> np.ndarray:
        """The d x p image projection head, with joint = hidden @ projection."""

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-norm p-dimensional text embeddings."""


class StubEncoder:
    """Deterministic toy encoder: embeddings are fixed linear maps of
    downsampled pixels, so identical inputs give identical rows."""

    _THUMB = 8

    def __init__(self, hidden_dim: int = 16, joint_dim: int = 8, seed: int = 424242):
        self.name = f"{STUB_NAME}-{hidden_dim}x{joint_dim}"
        self.hidden_dim = hidden_dim
        self.joint_dim = joint_dim
        rng = np.random.default_rng(seed)
        n_pixels = 3 * self._THUMB * self._THUMB
        self._pixel_map = rng.standard_normal((n_pixels, hidden_dim)) / np.sqrt(n_pixels)
        self._projection = rng.standard_normal((hidden_dim, joint_dim)) / np.sqrt(hidden_dim)

    def encode_images(self, images):
        rows = []
        for image in images:
            thumb = image.convert("RGB").resize((self._THUMB, self._THUMB), Image.BILINEAR)
            pixels = np.asarray(thumb, dtype=np.float64).ravel() / 255.0
            rows.append(pixels @ self._pixel_map)
        hidden = np.array(rows)
        return hidden, hidden @ self._projection

    def projection(self) -> np.ndarray:
        return self._projection.copy()

    def encode_texts(self, texts):
        rows = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.joint_dim)
            rows.append(vec / np.linalg.norm(vec))
        return np.array(rows)


class HFClipEncoder:
    """Frozen CLIP-style checkpoint from the transformers hub."""

    def __init__(self, model_id: str = DEFAULT_ENCODER, device: str = "cpu", batch_size: int = 16):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.name = model_id
        self._device = device
        self._batch_size = batch_size
        self._model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self._processor = CLIPProcessor.from_pretrained(model_id)
        self.hidden_dim = self._model.config.vision_config.hidden_size
        self.joint_dim = self._model.config.projection_dim

    def encode_images(self, images):
        torch = self._torch
        hidden_rows, joint_rows = [], []
        with torch.no_grad():
            for start in range(0, len(images), self._batch_size):
                batch = [img.convert("RGB") for img in images[start : start + self._batch_size]]
                inputs = self._processor(images=batch, return_tensors="pt").to(self._device)
                outputs = self._model.vision_model(**inputs)
                pooled = outputs.pooler_output  # post-layernorm CLS, (b, d)
                joint = self._model.visual_projection(pooled)
                hidden_rows.append(pooled.cpu().numpy())
                joint_rows.append(joint.cpu().numpy())
        return np.concatenate(hidden_rows), np.concatenate(joint_rows)

    def projection(self) -> np.ndarray:
        weight = self._model.visual_projection.weight.detach().cpu().numpy()  # (p, d)
        return weight.T.copy()

    def encode_texts(self, texts):
        torch = self._torch
        rows = []
        with torch.no_grad():
            for start in range(0, len(texts), self._batch_size):
                batch = list(texts[start : start + self._batch_size])
                inputs = self._processor(
                    text=batch, return_tensors="pt", padding=True, truncation=True
                ).to(self._device)
                features = self._model.get_text_features(**inputs).cpu().numpy()
                rows.append(features)
        out = np.concatenate(rows)
        return out / np.linalg.norm(out, axis=1, keepdims=True)


def make_encoder(spec: str) -> Encoder:
    """`stub` (optionally `stub:<d>x<p>`) or a transformers model id."""
    if spec == STUB_NAME:
        return StubEncoder()
    if spec.startswith(f"{STUB_NAME}:"):
        dims = spec.split(":", 1)[1]
        d, p = (int(v) for v in dims.split("x"))
        return StubEncoder(hidden_dim=d, joint_dim=p)
    return HFClipEncoder(spec)
