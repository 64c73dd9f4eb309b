import numpy as np
from PIL import Image

from sidextract.augment import (
    CROP_SIZE,
    augment_train,
    jpeg_compress,
    maybe_hflip,
    random_resized_crop,
    to_rgb,
)

from .conftest import make_image


def test_random_resized_crop_output_size(rng):
    image = make_image(rng, size=(200, 150))
    out = random_resized_crop(image, rng)
    assert out.size == (CROP_SIZE, CROP_SIZE)


def test_crop_area_within_scale(rng):
    # reconstructable via the crop box: check the rng contract indirectly
    # by verifying many draws stay inside the source image
    image = make_image(rng, size=(120, 80))
    for _ in range(20):
        out = random_resized_crop(image, rng)
        assert out.size == (CROP_SIZE, CROP_SIZE)


def test_hflip_deterministic_given_rng():
    image = Image.fromarray(np.arange(12, dtype=np.uint8).reshape(2, 2, 3), mode="RGB")
    a = maybe_hflip(image, np.random.default_rng(3))
    b = maybe_hflip(image, np.random.default_rng(3))
    assert np.array_equal(np.asarray(a), np.asarray(b))


def test_jpeg_compress_returns_rgb_image(rng):
    out = jpeg_compress(make_image(rng), rng)
    assert out.mode == "RGB"
    assert out.size == (96, 64)


def test_to_rgb_converts_modes(rng):
    gray = make_image(rng, mode="L")
    assert to_rgb(gray).mode == "RGB"
    rgb = make_image(rng)
    assert to_rgb(rgb) is rgb


def test_augment_pipeline_deterministic(rng):
    image = make_image(rng, size=(300, 200))
    a = augment_train(image, np.random.default_rng(11))
    b = augment_train(image, np.random.default_rng(11))
    assert np.array_equal(np.asarray(a), np.asarray(b))
    c = augment_train(image, np.random.default_rng(12))
    assert not np.array_equal(np.asarray(a), np.asarray(c))
