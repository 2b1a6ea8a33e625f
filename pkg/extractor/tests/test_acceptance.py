"""Extractor acceptance: round-trip into the consumer, HSV law, determinism."""

import hashlib

import numpy as np

from aesrec.features import load_features, load_hsv_table
from conftest import write_manifest
from imgfeat.cli import main


def _report(cap, name, ok, detail=""):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    with cap.disabled():
        print(line, flush=True)
    assert ok, line


def test_extractor_round_trip(image_dir, tmp_path, capsys):
    manifest = write_manifest(tmp_path / "m.csv", [
        ("red", image_dir / "solid_red.png"),
        ("tex", image_dir / "textured.png"),
        ("duo", image_dir / "duotone.png"),
        ("hue", image_dir / "single_hue.png"),
        ("gray", image_dir / "grayscale.png"),
    ])
    out = tmp_path / "features.bin"
    assert main(["extract", "--manifest", str(manifest), "--out", str(out),
                 "--bins", "16"]) == 0

    # consumer-side load: zero validation errors and consistent blocks
    item_ids = out.with_suffix(".bin.items.txt").read_text().splitlines()
    fm = load_features(out, expected_items=5)
    loaded_ok = (
        fm.n_items == 5
        and fm.dim_cnn == 512
        and fm.dim_aes == 13
        and np.isfinite(fm.matrix).all()
        and item_ids == ["red", "tex", "duo", "hue", "gray"]
    )

    table = load_hsv_table(out.with_suffix(".bin.hsv.tsv"), 5, item_ids=item_ids)
    hsv_ok = bool(np.allclose(table.histograms.sum(axis=2), 1.0, atol=1e-9))

    duo_index = item_ids.index("duo")
    hue_index = item_ids.index("hue")
    duotone_scores = fm.aes_block()[:, 10]
    duotone_ok = duotone_scores[duo_index] > duotone_scores[hue_index]

    digest_a = hashlib.sha256(out.read_bytes()).hexdigest()
    out_b = tmp_path / "features_b.bin"
    assert main(["extract", "--manifest", str(manifest), "--out", str(out_b),
                 "--bins", "16"]) == 0
    digest_b = hashlib.sha256(out_b.read_bytes()).hexdigest()
    hash_ok = digest_a == digest_b

    _report(
        capsys,
        "extractor-round-trip",
        loaded_ok and hsv_ok and duotone_ok and hash_ok,
        f"load={loaded_ok} hsv-sums={hsv_ok} duotone>{'single'}={duotone_ok} "
        f"hash-stable={hash_ok}",
    )
