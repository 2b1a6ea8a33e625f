"""Writers for the feature file and HSV table formats the recommender reads.

Binary feature file: 16-byte header (magic `VRAF`, version u32, item count
u32, total dim u32), then dim_cnn u32 plus 4 padding bytes, then one record
per item: item_index u32 followed by dim little-endian f32 values. Indices
are row positions in extraction order. Implemented here independently of
the consumer so the round-trip test exercises both sides of the contract.

HSV table: text rows `item_id<TAB>H<TAB>S<TAB>V`, each channel a
comma-separated unit-normalized histogram.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"VRAF"
FEATURE_VERSION = 1


@dataclass
class FeatureRow:
    item_id: str
    cnn: np.ndarray
    aesthetic: np.ndarray
    hsv: np.ndarray  # (3, bins)


def write_feature_file(rows: list, path) -> None:
    """Emit [CNN block; aesthetic block] vectors for every row, in order."""
    if not rows:
        raise ValueError("no feature rows to write")
    dim_cnn = len(rows[0].cnn)
    dim_aes = len(rows[0].aesthetic)
    dim = dim_cnn + dim_aes
    out = bytearray()
    out += struct.pack("<4sIII", FEATURE_MAGIC, FEATURE_VERSION, len(rows), dim)
    out += struct.pack("<II", dim_cnn, 0)
    for index, row in enumerate(rows):
        if len(row.cnn) != dim_cnn or len(row.aesthetic) != dim_aes:
            raise ValueError(f"row {row.item_id!r} has inconsistent dims")
        vector = np.concatenate([row.cnn, row.aesthetic]).astype("<f4")
        if not np.isfinite(vector).all():
            raise ValueError(f"row {row.item_id!r} has non-finite values")
        out += struct.pack("<I", index)
        out += vector.tobytes()
    Path(path).write_bytes(bytes(out))


def write_hsv_table(rows: list, path) -> None:
    lines = []
    for row in rows:
        cells = "\t".join(
            ",".join(repr(float(x)) for x in channel) for channel in row.hsv
        )
        lines.append(f"{row.item_id}\t{cells}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_id_map(rows: list, path) -> None:
    """Item ids in row order, one per line (index -> id map)."""
    Path(path).write_text(
        "\n".join(row.item_id for row in rows) + "\n", encoding="utf-8"
    )
