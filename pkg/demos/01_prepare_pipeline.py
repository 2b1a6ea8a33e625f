"""Walk through ingestion: raw purchase lines -> filtered, indexed splits.

Builds a small purchase log in a temp directory, then runs the same steps
the `aesrec prepare` command runs, printing what each stage does to the
data.
"""

import tempfile
from pathlib import Path

import numpy as np

from aesrec.data import (
    discretize_time,
    k_core_filter,
    load_interactions,
    split_dataset,
    write_split,
)

WEEK = 7 * 24 * 3600

workdir = Path(tempfile.mkdtemp(prefix="aesrec-demo-"))
rng = np.random.default_rng(0)

lines = []
for p in range(30):
    for _ in range(rng.integers(2, 12)):
        q = int(rng.integers(40))
        ts = int(rng.integers(0, 15)) * WEEK + int(rng.integers(0, WEEK))
        lines.append(f"user{p},item{q},{ts}")
raw = workdir / "purchases.csv"
raw.write_text("\n".join(lines) + "\n", encoding="utf-8")
print(f"wrote {len(lines)} raw purchase lines to {raw}")

records = load_interactions(raw, min_timestamp=0)
print(f"loaded {len(records)} records")

filtered = k_core_filter(records, k=3)
print(f"3-core filtering keeps {len(filtered)} records "
      f"({len(set(r.user for r in filtered))} users, "
      f"{len(set(r.item for r in filtered))} items)")

ds = discretize_time(filtered, WEEK)
print(f"weekly discretization: P={ds.n_users} Q={ds.n_items} R={ds.n_intervals}, "
      f"{ds.n_positives} distinct (user, item, week) positives")
print(f"user-item matrix sparsity: {100 * ds.matrix_sparsity():.2f}%")
print(f"tensor sparsity:           {100 * ds.tensor_sparsity():.4f}%")

bundle = split_dataset(ds, (0.8, 0.1, 0.1), seed=7)
print(f"split: {bundle.train.n_positives} train / {len(bundle.validation)} "
      f"validation / {len(bundle.test)} test "
      f"(cold-dropped {bundle.dropped_validation + bundle.dropped_test})")

write_split(bundle, workdir / "split")
print(f"manifest written to {workdir / 'split'}")
