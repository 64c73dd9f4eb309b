"""Training-time image augmentations, applied before encoder preprocessing.

The pipeline mirrors the detector's training recipe: random resized
crop keeping 50-100% of the area, horizontal flip with probability 0.5,
JPEG recompression at a quality drawn uniformly from 65-100, and RGB
conversion throughout. The final resize to the encoder's native
resolution is the encoder's own preprocessing step, not part of this
module. Validation and test images bypass augmentation entirely.
"""

from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image

CROP_SCALE = (0.5, 1.0)
CROP_RATIO = (3.0 / 4.0, 4.0 / 3.0)
CROP_SIZE = 512
FLIP_PROBABILITY = 0.5
JPEG_QUALITY = (65, 100)


def to_rgb(image: Image.Image) -> Image.Image:
    return image if image.mode == "RGB" else image.convert("RGB")


def random_resized_crop(
    image: Image.Image,
    rng: np.random.Generator,
    scale: tuple[float, float] = CROP_SCALE,
    ratio: tuple[float, float] = CROP_RATIO,
    size: int = CROP_SIZE,
) -> Image.Image:
    """Crop a random area fraction at a random aspect ratio, then
    resize to `size` x `size`. Falls back to a center crop when no
    valid box fits."""
    width, height = image.size
    area = width * height
    log_ratio = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(10):
        target_area = area * rng.uniform(*scale)
        aspect = math.exp(rng.uniform(*log_ratio))
        crop_w = int(round(math.sqrt(target_area * aspect)))
        crop_h = int(round(math.sqrt(target_area / aspect)))
        if 0 < crop_w <= width and 0 < crop_h <= height:
            left = int(rng.integers(0, width - crop_w + 1))
            top = int(rng.integers(0, height - crop_h + 1))
            box = (left, top, left + crop_w, top + crop_h)
            return image.crop(box).resize((size, size), Image.BILINEAR)
    side = min(width, height)
    left = (width - side) // 2
    top = (height - side) // 2
    return image.crop((left, top, left + side, top + side)).resize((size, size), Image.BILINEAR)


def maybe_hflip(image: Image.Image, rng: np.random.Generator, p: float = FLIP_PROBABILITY) -> Image.Image:
    if rng.random() < p:
        return image.transpose(Image.FLIP_LEFT_RIGHT)
    return image


def jpeg_compress(
    image: Image.Image, rng: np.random.Generator, quality: tuple[int, int] = JPEG_QUALITY
) -> Image.Image:
    q = int(rng.integers(quality[0], quality[1] + 1))
    buffer = io.BytesIO()
    image.save(buffer, format="JPEG", quality=q)
    buffer.seek(0)
    out = Image.open(buffer)
    out.load()
    return out


def augment_train(image: Image.Image, rng: np.random.Generator) -> Image.Image:
    image = to_rgb(image)
    image = random_resized_crop(image, rng)
    image = maybe_hflip(image, rng)
    return jpeg_compress(image, rng)


def preprocess_eval(image: Image.Image) -> Image.Image:
    return to_rgb(image)
