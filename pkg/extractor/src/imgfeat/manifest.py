"""Image manifest: `item_id,image_path` CSV rows."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class ManifestRow:
    item_id: str
    image_path: Path


def read_manifest(path) -> list:
    """Parse the manifest; item ids must be unique and paths must exist.

    A first line reading exactly `item_id,image_path` is treated as a
    header and skipped.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    rows = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if lineno == 1 and line == "item_id,image_path":
            continue
        parts = line.split(",", 1)
        if len(parts) != 2 or not parts[0].strip():
            raise ManifestError(f"{path}:{lineno}: expected item_id,image_path")
        item_id = parts[0].strip()
        image_path = Path(parts[1].strip())
        if item_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate item id {item_id!r}")
        if not image_path.exists():
            raise ManifestError(f"{path}:{lineno}: image not found: {image_path}")
        seen.add(item_id)
        rows.append(ManifestRow(item_id, image_path))
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    return rows
