"""Run the three extractors over a manifest and assemble feature rows."""

from __future__ import annotations

from .cnn import CnnBackbone
from .colors import aesthetic_proxy, channel_histograms, load_rgb
from .featfile import FeatureRow
from .manifest import read_manifest


def extract_rows(manifest_path, bins: int = 32, backbone: str = "resnet18",
                 seed: int = 0) -> list:
    """Per-item CNN, aesthetic-proxy, and HSV features in manifest order.

    Undecodable images are skipped (a warning is emitted per image); the
    surviving rows keep their relative order.
    """
    rows = []
    net = CnnBackbone(backbone, seed=seed)
    for entry in read_manifest(manifest_path):
        rgb = load_rgb(entry.image_path)
        if rgb is None:
            continue
        rows.append(FeatureRow(
            item_id=entry.item_id,
            cnn=net.embed(rgb),
            aesthetic=aesthetic_proxy(rgb, bins=bins),
            hsv=channel_histograms(rgb, bins),
        ))
    if not rows:
        raise RuntimeError(f"no decodable images in {manifest_path}")
    return rows
