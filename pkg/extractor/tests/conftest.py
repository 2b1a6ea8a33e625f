"""Synthetic test images written as PNGs."""

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def image_dir(tmp_path):
    out = tmp_path / "images"
    out.mkdir()

    def put(name, array):
        Image.fromarray(array.astype(np.uint8)).save(out / name)
        return out / name

    rng = np.random.default_rng(0)
    size = (32, 32, 3)

    solid = np.zeros(size)
    solid[..., 0] = 200
    put("solid_red.png", solid)

    put("textured.png", rng.integers(0, 256, size=size))

    # two saturated hues, half red half green
    duotone = np.zeros(size)
    duotone[:16, :, 0] = 230
    duotone[16:, :, 1] = 230
    put("duotone.png", duotone)

    single_hue = np.zeros(size)
    single_hue[:16, :, 0] = 230
    single_hue[16:, :, 0] = 180
    put("single_hue.png", single_hue)

    gray = np.repeat(
        np.linspace(30, 220, 32)[None, :, None], 32, axis=0
    ).repeat(3, axis=2)
    put("grayscale.png", gray)

    two_value = np.zeros(size)
    two_value[16:] = 255
    put("two_value.png", two_value)

    (out / "broken.png").write_bytes(b"this is not an image")
    return out


def write_manifest(path, rows):
    path.write_text(
        "\n".join(f"{item_id},{image}" for item_id, image in rows) + "\n",
        encoding="utf-8",
    )
    return path
