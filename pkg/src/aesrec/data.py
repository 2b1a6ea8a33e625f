"""Interaction ingestion, k-core filtering, time discretization, and splits.

Raw purchase records (`user,item,unix_timestamp` lines) are filtered,
indexed, and materialized into a :class:`Dataset`: the support of the binary
purchase tensor over (user, item, interval) plus its two marginal pair sets
(user-item and interval-item). Splitting partitions the purchase triples
into train/validation/test and drops held-out records whose user or item
never occurs in training (cold removal).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class InteractionRecord:
    """One raw purchase event. Timestamps are seconds since the epoch."""

    user: str
    item: str
    timestamp: int
    category: str | None = None


def load_interactions(path, min_timestamp: int = 0, category: str | None = None):
    """Read `user,item,unix_timestamp[,category]` lines from ``path``.

    Records with ``timestamp < min_timestamp`` are dropped; the rest are
    returned in file order. If ``category`` is given, only records carrying
    that category value are kept.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read interactions file {path}: {exc}") from exc

    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [part.strip() for part in line.split(",")]
        if len(parts) not in (3, 4):
            raise DataError(
                f"{path}:{lineno}: expected user,item,timestamp[,category], got {raw!r}"
            )
        user, item = parts[0], parts[1]
        if not user or not item:
            raise DataError(f"{path}:{lineno}: empty user or item id")
        try:
            timestamp = int(parts[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad timestamp {parts[2]!r}") from None
        if timestamp < 0:
            raise DataError(f"{path}:{lineno}: negative timestamp {timestamp}")
        cat = parts[3] if len(parts) == 4 else None
        if timestamp < min_timestamp:
            continue
        if category is not None and cat != category:
            continue
        records.append(InteractionRecord(user, item, timestamp, cat))
    return records


def k_core_filter(records, k: int):
    """Iteratively drop records of users/items with fewer than ``k`` records.

    Peeling repeats until a fixed point: every surviving user and item has at
    least ``k`` surviving records. The fixed point is order-independent, so
    users and items are simply re-checked together each round. An empty
    result is valid.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    kept = list(records)
    while True:
        user_counts = Counter(r.user for r in kept)
        item_counts = Counter(r.item for r in kept)
        survivors = [
            r for r in kept if user_counts[r.user] >= k and item_counts[r.item] >= k
        ]
        if len(survivors) == len(kept):
            return survivors
        kept = survivors


class Dataset:
    """Indexed purchase triples and their derived pair structures.

    ``positives`` holds the distinct (user, item, interval) index triples.
    The user-item and interval-item pair sets are projections of the triples
    and are rebuilt here rather than stored independently. Instances are
    immutable after construction and safe to share across threads.
    """

    def __init__(self, users, items, n_intervals: int, positives,
                 origin: int | None = None, granularity: int | None = None):
        self.users = list(users)
        self.items = list(items)
        self.n_intervals = int(n_intervals)
        self.origin = origin
        self.granularity = granularity

        pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        if len(pos):
            pos = np.unique(pos, axis=0)
        self.positives = pos
        self.positives.setflags(write=False)
        self._validate()

        p_arr, q_arr, r_arr = pos[:, 0], pos[:, 1], pos[:, 2]
        self._user_items = _group_sorted(p_arr, q_arr, self.n_users)
        self._interval_items = _group_sorted(r_arr, q_arr, self.n_intervals)
        pairs_uq = np.unique(pos[:, :2], axis=0) if len(pos) else pos[:, :2]
        pairs_rq = np.unique(pos[:, [2, 1]], axis=0) if len(pos) else pos[:, [2, 1]]
        self._user_item_pairs = pairs_uq
        self._interval_item_pairs = pairs_rq

    def _validate(self):
        pos = self.positives
        if len(pos) == 0:
            return
        if pos[:, 0].min() < 0 or pos[:, 0].max() >= self.n_users:
            raise DataError("user index out of range in positives")
        if pos[:, 1].min() < 0 or pos[:, 1].max() >= self.n_items:
            raise DataError("item index out of range in positives")
        if pos[:, 2].min() < 0 or pos[:, 2].max() >= self.n_intervals:
            raise DataError("interval index out of range in positives")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_positives(self) -> int:
        return len(self.positives)

    @property
    def user_item_pairs(self):
        """Distinct (user, item) pairs: support of the user-item matrix."""
        return self._user_item_pairs

    @property
    def interval_item_pairs(self):
        """Distinct (interval, item) pairs: support of the time-item matrix."""
        return self._interval_item_pairs

    def items_of_user(self, p: int):
        """Sorted array of items purchased by user ``p``."""
        return self._user_items[p]

    def items_in_interval(self, r: int):
        """Sorted array of items purchased in interval ``r``."""
        return self._interval_items[r]

    def has_pair(self, p: int, q: int) -> bool:
        arr = self._user_items[p]
        i = np.searchsorted(arr, q)
        return i < len(arr) and arr[i] == q

    def tensor_sparsity(self) -> float:
        cells = self.n_users * self.n_items * self.n_intervals
        return 1.0 - self.n_positives / cells if cells else 1.0

    def matrix_sparsity(self) -> float:
        cells = self.n_users * self.n_items
        return 1.0 - len(self._user_item_pairs) / cells if cells else 1.0


def _group_sorted(keys, values, n_groups):
    """Per-group sorted unique value arrays from parallel key/value arrays."""
    groups = [[] for _ in range(n_groups)]
    for k, v in zip(keys.tolist(), values.tolist()):
        groups[k].append(v)
    return [np.unique(np.asarray(g, dtype=np.int64)) for g in groups]


def discretize_time(records, granularity: int) -> Dataset:
    """Index users/items by first appearance and bucket timestamps.

    Interval index is ``(timestamp - min timestamp) // granularity``; the
    number of intervals is the largest index plus one. Duplicate
    (user, item, interval) triples collapse to a single positive.
    """
    if granularity <= 0:
        raise ValueError(f"granularity must be positive, got {granularity}")
    if not records:
        raise DataError("cannot discretize an empty record list")

    min_ts = min(r.timestamp for r in records)
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users: list[str] = []
    items: list[str] = []
    triples = []
    for rec in records:
        if rec.user not in user_index:
            user_index[rec.user] = len(users)
            users.append(rec.user)
        if rec.item not in item_index:
            item_index[rec.item] = len(items)
            items.append(rec.item)
        r = (rec.timestamp - min_ts) // granularity
        triples.append((user_index[rec.user], item_index[rec.item], r))

    n_intervals = max(t[2] for t in triples) + 1
    return Dataset(users, items, n_intervals, triples,
                   origin=min_ts, granularity=granularity)


@dataclass
class SplitBundle:
    """Train dataset plus held-out validation/test triples.

    Held-out triples whose user or item has no training record are removed
    at construction (cold removal); the drop counts are retained for
    reporting. The three parts are disjoint as triple sets.
    """

    train: Dataset
    validation: np.ndarray
    test: np.ndarray
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)
    dropped_validation: int = 0
    dropped_test: int = 0
    extra: dict = field(default_factory=dict)

    def with_validation(self, triples) -> "SplitBundle":
        return replace(self, validation=np.asarray(triples, dtype=np.int64))


def split_dataset(ds: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitBundle:
    """Assign each triple to train/validation/test independently at random.

    Assignment probabilities are ``ratios`` (so part sizes fluctuate
    binomially around their expectations), drawn from a generator seeded by
    ``seed``; results are deterministic for a fixed seed. Validation and
    test triples referring to a user or item with no training record are
    dropped.
    """
    ratios = tuple(float(x) for x in ratios)
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ValueError(f"ratios must be three values summing to 1, got {ratios}")
    if ds.n_positives == 0:
        raise DataError("cannot split an empty dataset")

    rng = np.random.default_rng(seed & _SEED_MASK)
    assignment = rng.choice(3, size=ds.n_positives, p=ratios)
    pos = ds.positives
    train_triples = pos[assignment == 0]
    val_triples = pos[assignment == 1]
    test_triples = pos[assignment == 2]

    train_users = set(train_triples[:, 0].tolist())
    train_items = set(train_triples[:, 1].tolist())

    def drop_cold(triples):
        if len(triples) == 0:
            return triples, 0
        keep = np.array(
            [(p in train_users and q in train_items) for p, q, _ in triples.tolist()],
            dtype=bool,
        )
        return triples[keep], int((~keep).sum())

    val_kept, val_dropped = drop_cold(val_triples)
    test_kept, test_dropped = drop_cold(test_triples)

    train_ds = Dataset(ds.users, ds.items, ds.n_intervals, train_triples,
                       origin=ds.origin, granularity=ds.granularity)
    return SplitBundle(
        train=train_ds,
        validation=val_kept,
        test=test_kept,
        seed=seed,
        ratios=ratios,
        dropped_validation=val_dropped,
        dropped_test=test_dropped,
    )


def write_split(bundle: SplitBundle, out_dir) -> None:
    """Write the split manifest: three `p q r` triple files plus a sidecar.

    The sidecar records P, Q, R, seed, granularity, ratios, and drop counts;
    `users.txt`/`items.txt` map each index to its external identifier.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = bundle.train
    for name, triples in (
        ("train.txt", ds.positives),
        ("validation.txt", bundle.validation),
        ("test.txt", bundle.test),
    ):
        lines = [f"{p} {q} {r}" for p, q, r in np.asarray(triples).tolist()]
        (out / name).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    (out / "users.txt").write_text("\n".join(ds.users) + "\n", encoding="utf-8")
    (out / "items.txt").write_text("\n".join(ds.items) + "\n", encoding="utf-8")
    sidecar = {
        "P": ds.n_users,
        "Q": ds.n_items,
        "R": ds.n_intervals,
        "seed": bundle.seed,
        "granularity": ds.granularity,
        "origin": ds.origin,
        "ratios": list(bundle.ratios),
        "dropped_validation": bundle.dropped_validation,
        "dropped_test": bundle.dropped_test,
    }
    (out / "split_meta.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def read_split(in_dir) -> SplitBundle:
    """Load a split manifest written by :func:`write_split`."""
    src = Path(in_dir)
    meta_path = src / "split_meta.json"
    if not meta_path.exists():
        raise DataError(f"no split manifest found in {in_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))

    def read_triples(name):
        text = (src / name).read_text(encoding="utf-8")
        rows = [
            [int(x) for x in line.split()]
            for line in text.splitlines()
            if line.strip()
        ]
        return np.asarray(rows, dtype=np.int64).reshape(-1, 3)

    users = (src / "users.txt").read_text(encoding="utf-8").splitlines()
    items = (src / "items.txt").read_text(encoding="utf-8").splitlines()
    train_ds = Dataset(users, items, meta["R"], read_triples("train.txt"),
                       origin=meta.get("origin"), granularity=meta.get("granularity"))
    if train_ds.n_users != meta["P"] or train_ds.n_items != meta["Q"]:
        raise DataError("split manifest is inconsistent with its sidecar")
    return SplitBundle(
        train=train_ds,
        validation=read_triples("validation.txt"),
        test=read_triples("test.txt"),
        seed=meta["seed"],
        ratios=tuple(meta["ratios"]),
        dropped_validation=meta.get("dropped_validation", 0),
        dropped_test=meta.get("dropped_test", 0),
    )
