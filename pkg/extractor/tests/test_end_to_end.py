"""Full pipeline across the file interfaces: prepare, extract, train."""

import numpy as np
from PIL import Image

from aesrec.cli import main as aesrec_main
from aesrec.data import read_split
from imgfeat.cli import main as extract_main

WEEK = 7 * 24 * 3600


def test_extracted_features_train_the_recommender(tmp_path, capsys):
    rng = np.random.default_rng(5)

    # interactions over 10 users x 8 items
    lines = []
    for p in range(10):
        for q in rng.choice(8, size=4, replace=False):
            ts = int(rng.integers(0, 6)) * WEEK + int(rng.integers(0, WEEK))
            lines.append(f"user{p},item{q},{ts}")
    inter = tmp_path / "inter.csv"
    inter.write_text("\n".join(lines) + "\n", encoding="utf-8")

    data_dir = tmp_path / "prepared"
    assert aesrec_main([
        "prepare", "--interactions", str(inter), "--out-dir", str(data_dir),
        "--min-timestamp", "0", "--k-core", "2",
        "--granularity", str(WEEK), "--seed", "1",
    ]) == 0

    # one image per catalog item, manifest in index order
    bundle = read_split(data_dir)
    images = tmp_path / "imgs"
    images.mkdir()
    manifest_lines = []
    for ident in bundle.train.items:
        pixels = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        path = images / f"{ident}.png"
        Image.fromarray(pixels).save(path)
        manifest_lines.append(f"{ident},{path}")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")

    features = tmp_path / "features.bin"
    assert extract_main([
        "extract", "--manifest", str(manifest), "--out", str(features),
        "--bins", "8",
    ]) == 0

    run = tmp_path / "run"
    assert aesrec_main([
        "train", "--data-dir", str(data_dir), "--out-dir", str(run),
        "--model-kind", "vra-aplr", "--features", str(features),
        "--k1", "2", "--k2", "2", "--rho", "1", "--batch-size", "8",
        "--learn-rate", "0.02", "--max-iters", "1", "--lambda-r", "0.01",
        "--eval-every", "1", "--eval-subsample", "20",
        "--k-cnn", "2", "--k-aes", "2", "--seed", "2",
    ]) == 0
    assert (run / "checkpoint.bin").exists()
    history = (run / "history.csv").read_text().splitlines()
    assert len(history) == 2
