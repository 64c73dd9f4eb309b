import numpy as np
import pytest
from PIL import Image


@pytest.fixture()
def rng():
    return np.random.default_rng(8)


def make_image(rng, size=(96, 64), mode="RGB"):
    channels = len(mode)
    pixels = rng.integers(0, 256, (size[1], size[0], channels), dtype=np.uint8)
    if channels == 1:
        pixels = pixels[:, :, 0]
    return Image.fromarray(pixels, mode=mode)


@pytest.fixture()
def image_tree(tmp_path, rng):
    """Four folders with two images each, one per (class, split) corner."""
    layout = {
        "real/train": (0, "real", "train"),
        "real/test": (0, "real", "test"),
        "fake/train": (1, "testgen", "train"),
        "fake/test": (1, "testgen", "test"),
    }
    folders = []
    for rel, (label, generator, split) in layout.items():
        folder = tmp_path / "images" / rel
        folder.mkdir(parents=True)
        for i in range(2):
            make_image(rng).save(folder / f"img{i}.png")
        folders.append({"path": rel, "label": label, "generator": generator, "split": split})
    import json

    split_map = tmp_path / "split_map.json"
    split_map.write_text(json.dumps({"folders": folders}))
    return tmp_path / "images", split_map
