"""Per-item visual feature vectors and HSV histogram tables.

Feature file layout (binary): a 16-byte header ``magic 'VRAF', version u32,
item count u32, total dim u32``, then ``dim_cnn u32`` plus 4 padding bytes,
then one record per item: ``item_index u32`` followed by ``dim`` little-endian
f32 values. A text alternative (`item_id<TAB>comma-separated floats`) is
accepted for small fixtures. Vectors are ordered [CNN block; aesthetic block].

HSV tables are text: `item_id<TAB>H-bins<TAB>S-bins<TAB>V-bins`, each field a
comma-separated unit-normalized histogram.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

FEATURE_MAGIC = b"VRAF"
FEATURE_VERSION = 1


class FeatureMatrix:
    """Dense per-item visual features, immutable after construction.

    ``matrix`` has one row per item index, length ``dim_cnn + dim_aes``.
    """

    def __init__(self, dim_cnn: int, dim_aes: int, matrix):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DataError("feature matrix must be 2-D (items x dims)")
        if dim_cnn < 0 or dim_aes < 0 or dim_cnn + dim_aes != matrix.shape[1]:
            raise DataError(
                f"block dims ({dim_cnn}+{dim_aes}) do not match vector length "
                f"{matrix.shape[1]}"
            )
        bad = np.flatnonzero(~np.isfinite(matrix).all(axis=1))
        if len(bad):
            raise DataError(f"non-finite feature values for item index {int(bad[0])}")
        self.dim_cnn = int(dim_cnn)
        self.dim_aes = int(dim_aes)
        self.matrix = matrix
        self.matrix.setflags(write=False)

    @property
    def n_items(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, q: int):
        return self.matrix[q]

    def cnn_block(self):
        return self.matrix[:, : self.dim_cnn]

    def aes_block(self):
        return self.matrix[:, self.dim_cnn:]


def load_features(path, expected_items: int, item_ids=None,
                  dim_cnn: int | None = None) -> FeatureMatrix:
    """Load a feature file covering exactly ``expected_items`` items.

    Binary files carry their own block split; for text files ``dim_cnn``
    may be given (default: half the vector length). ``item_ids`` maps
    index -> external id and is required to resolve non-numeric text ids.
    """
    raw = Path(path).read_bytes()
    if raw[:4] == FEATURE_MAGIC:
        return _load_binary(raw, path, expected_items)
    return _load_text(raw, path, expected_items, item_ids, dim_cnn)


def _load_binary(raw, path, expected_items):
    if len(raw) < 24:
        raise DataError(f"{path}: truncated feature file header")
    magic, version, n_items, dim = struct.unpack_from("<4sIII", raw, 0)
    dim_cnn, _pad = struct.unpack_from("<II", raw, 16)
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported feature file version {version}")
    if n_items != expected_items:
        raise DataError(
            f"{path}: file covers {n_items} items, expected {expected_items}"
        )
    if dim_cnn > dim:
        raise DataError(f"{path}: CNN block ({dim_cnn}) exceeds total dim ({dim})")
    record = 4 + 4 * dim
    if len(raw) != 24 + record * n_items:
        raise DataError(f"{path}: feature file size does not match its header")

    matrix = np.full((n_items, dim), np.nan, dtype=np.float64)
    seen = np.zeros(n_items, dtype=bool)
    off = 24
    for _ in range(n_items):
        (idx,) = struct.unpack_from("<I", raw, off)
        if idx >= n_items:
            raise DataError(f"{path}: item index {idx} out of range")
        if seen[idx]:
            raise DataError(f"{path}: duplicate row for item index {idx}")
        seen[idx] = True
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=off + 4)
        if not np.isfinite(vec).all():
            raise DataError(f"{path}: non-finite values for item index {idx}")
        matrix[idx] = vec
        off += record
    missing = np.flatnonzero(~seen)
    if len(missing):
        raise DataError(f"{path}: missing items {missing.tolist()}")
    return FeatureMatrix(dim_cnn, dim - dim_cnn, matrix)


def _load_text(raw, path, expected_items, item_ids, dim_cnn):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not a feature file (bad magic, not UTF-8)") from exc
    index_of = None
    if item_ids is not None:
        index_of = {str(ident): i for i, ident in enumerate(item_ids)}
        if len(index_of) != expected_items:
            raise DataError(f"{path}: item id map has {len(index_of)} entries, "
                            f"expected {expected_items}")

    rows: dict[int, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            ident, values = line.split("\t", 1)
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected item_id<TAB>floats") from None
        if index_of is not None:
            if ident not in index_of:
                raise DataError(f"{path}:{lineno}: unknown item id {ident!r}")
            idx = index_of[ident]
        else:
            try:
                idx = int(ident)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: non-numeric id {ident!r} needs an item id map"
                ) from None
            if not 0 <= idx < expected_items:
                raise DataError(f"{path}:{lineno}: item index {idx} out of range")
        try:
            vec = np.array([float(x) for x in values.split(",")], dtype=np.float64)
        except ValueError:
            raise DataError(f"{path}:{lineno}: unparseable feature values") from None
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise DataError(
                f"{path}:{lineno}: row has {len(vec)} dims, previous rows {dim}"
            )
        if not np.isfinite(vec).all():
            raise DataError(f"{path}:{lineno}: non-finite values for item {ident!r}")
        if idx in rows:
            raise DataError(f"{path}:{lineno}: duplicate row for item {ident!r}")
        rows[idx] = vec

    missing = sorted(set(range(expected_items)) - set(rows))
    if missing:
        names = [item_ids[i] for i in missing] if item_ids is not None else missing
        raise DataError(f"{path}: missing items {names}")
    matrix = np.stack([rows[i] for i in range(expected_items)])
    if dim_cnn is None:
        dim_cnn = matrix.shape[1] // 2
    return FeatureMatrix(dim_cnn, matrix.shape[1] - dim_cnn, matrix)


def save_features(fm: FeatureMatrix, path) -> None:
    """Write the binary feature file format (values stored as f32)."""
    out = bytearray()
    out += struct.pack("<4sIII", FEATURE_MAGIC, FEATURE_VERSION, fm.n_items, fm.dim)
    out += struct.pack("<II", fm.dim_cnn, 0)
    data32 = fm.matrix.astype("<f4")
    for idx in range(fm.n_items):
        out += struct.pack("<I", idx)
        out += data32[idx].tobytes()
    Path(path).write_bytes(bytes(out))


def normalize_features(fm: FeatureMatrix, mode: str = "none") -> FeatureMatrix:
    """Return ``fm`` unchanged (`none`) or with each block scaled to unit L2.

    `unitL2-per-block` rescales the CNN block and the aesthetic block of each
    item independently; all-zero blocks are left as zero.
    """
    if mode == "none":
        return fm
    if mode != "unitL2-per-block":
        raise ValueError(f"unknown normalization mode {mode!r}")
    matrix = fm.matrix.copy()
    for lo, hi in ((0, fm.dim_cnn), (fm.dim_cnn, fm.dim)):
        block = matrix[:, lo:hi]
        norms = np.linalg.norm(block, axis=1)
        nonzero = norms > 0
        block[nonzero] /= norms[nonzero, None]
    return FeatureMatrix(fm.dim_cnn, fm.dim_aes, matrix)


class HsvHistogramTable:
    """Per-item hue/saturation/value histograms, each unit-normalized."""

    def __init__(self, bins: int, histograms):
        histograms = np.ascontiguousarray(histograms, dtype=np.float64)
        if bins < 2:
            raise DataError(f"need at least 2 bins, got {bins}")
        if histograms.ndim != 3 or histograms.shape[1:] != (3, bins):
            raise DataError("histograms must have shape (items, 3, bins)")
        if (histograms < 0).any():
            raise DataError("histograms must be non-negative")
        sums = histograms.sum(axis=2)
        off = np.argwhere(np.abs(sums - 1.0) > 1e-9)
        if len(off):
            q, ch = off[0]
            raise DataError(
                f"histogram for item {int(q)} channel {int(ch)} sums to "
                f"{sums[q, ch]:.12f}, expected 1"
            )
        self.bins = int(bins)
        self.histograms = histograms
        self.histograms.setflags(write=False)

    @property
    def n_items(self) -> int:
        return self.histograms.shape[0]


def load_hsv_table(path, expected_items: int | None, item_ids=None) -> HsvHistogramTable:
    """Read `item_id<TAB>H<TAB>S<TAB>V` rows of comma-separated histograms.

    With ``expected_items=None`` the table must cover a dense index range
    starting at zero and its row count defines the item count.
    """
    text = Path(path).read_text(encoding="utf-8")
    index_of = None
    if item_ids is not None:
        index_of = {str(ident): i for i, ident in enumerate(item_ids)}

    rows: dict[int, np.ndarray] = {}
    bins = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: expected item_id and 3 histograms")
        ident = parts[0].strip()
        if index_of is not None:
            if ident not in index_of:
                raise DataError(f"{path}:{lineno}: unknown item id {ident!r}")
            idx = index_of[ident]
        else:
            idx = int(ident)
        channels = []
        for chunk in parts[1:]:
            vec = np.array([float(x) for x in chunk.split(",")], dtype=np.float64)
            channels.append(vec)
        lengths = {len(c) for c in channels}
        if len(lengths) != 1:
            raise DataError(f"{path}:{lineno}: channel histograms differ in length")
        row = np.stack(channels)
        if bins is None:
            bins = row.shape[1]
        elif row.shape[1] != bins:
            raise DataError(f"{path}:{lineno}: inconsistent bin count")
        rows[idx] = row

    if not rows:
        raise DataError(f"{path}: empty HSV table")
    if expected_items is None:
        expected_items = max(rows) + 1
    missing = sorted(set(range(expected_items)) - set(rows))
    if missing:
        raise DataError(f"{path}: missing items {missing}")
    histograms = np.stack([rows[i] for i in range(expected_items)])
    return HsvHistogramTable(bins, histograms)


def hsv_segment_diff(table: HsvHistogramTable, segment_a, baseline):
    """Mean histogram of ``segment_a`` minus mean histogram of ``baseline``.

    Returns an array of shape (3, bins); since both means are unit
    histograms, each channel of the difference sums to zero.
    """
    seg_a = np.asarray(sorted(set(int(q) for q in segment_a)), dtype=np.int64)
    base = np.asarray(sorted(set(int(q) for q in baseline)), dtype=np.int64)
    for name, seg in (("segment", seg_a), ("baseline", base)):
        if len(seg) == 0:
            raise DataError(f"{name} is empty")
        if seg.min() < 0 or seg.max() >= table.n_items:
            raise DataError(f"{name} contains an out-of-range item index")
    return table.histograms[seg_a].mean(axis=0) - table.histograms[base].mean(axis=0)
