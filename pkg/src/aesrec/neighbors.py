"""Per-item neighbor sets for the middle preference tier.

Four families: clusters in the CNN feature space, clusters in the aesthetic
feature space, co-purchase links on the user-item graph, and same-window
links on the time-item graph. Cluster families are partitions (two items are
neighbors iff they share a cluster); graph families are symmetric by
definition. Every set excludes the item itself, since ranking an item
against itself is a zero-margin pair.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from .data import Dataset
from .errors import ConfigError, DataError
from .features import FeatureMatrix

_SEED_MASK = (1 << 63) - 1

NEIGHBOR_CACHE_MAGIC = b"VRNC"


def _kmeans_labels(points, k: int, seed, max_iter: int = 100):
    """Lloyd iterations with seeded kmeans++-style init.

    Assignment ties break toward the lowest cluster index; empty clusters
    are reseeded at the point farthest from its current center. With
    ``k >= n`` every point gets its own cluster.
    """
    n = len(points)
    if k >= n:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = cdist(points, centers, "sqeuclidean")
        new_labels = dists.argmin(axis=1)
        for j in range(k):
            if not (new_labels == j).any():
                far = int(dists[np.arange(n), new_labels].argmax())
                new_labels[far] = j
        if (new_labels == labels).all():
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
    return labels


def _sets_from_labels(labels):
    n = len(labels)
    sets: list[np.ndarray] = [None] * n
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        for q in members:
            sets[q] = members[members != q]
    return sets


def cluster_neighbors(features: FeatureMatrix, block: str, k: int, seed):
    """Cluster one feature block; each item's set is its cluster minus itself."""
    if features.n_items == 0:
        raise DataError("cannot cluster an empty feature matrix")
    if not 1 <= k <= features.n_items:
        raise ConfigError(f"cluster count must be in [1, {features.n_items}], got {k}")
    if block == "cnn":
        points = features.cnn_block()
    elif block == "aesthetic":
        points = features.aes_block()
    else:
        raise ConfigError(f"unknown feature block {block!r}")
    labels = _kmeans_labels(np.ascontiguousarray(points), k, seed)
    return _sets_from_labels(labels)


def _co_occurrence_sets(incidence: sparse.csr_matrix, n_items: int):
    co = (incidence.T @ incidence).tocsr()
    co.setdiag(0)
    co.eliminate_zeros()
    sets = []
    for q in range(n_items):
        row = co.indices[co.indptr[q]: co.indptr[q + 1]]
        sets.append(np.sort(row.astype(np.int64)))
    return sets


def user_graph_neighbors(ds: Dataset):
    """Items co-purchased with q by at least one user (q itself excluded)."""
    pairs = ds.user_item_pairs
    incidence = sparse.csr_matrix(
        (np.ones(len(pairs), dtype=np.int32), (pairs[:, 0], pairs[:, 1])),
        shape=(ds.n_users, ds.n_items),
    )
    return _co_occurrence_sets(incidence, ds.n_items)


def time_graph_neighbors(ds: Dataset, delta_r: int = 0):
    """Items purchased within ``delta_r`` intervals of a purchase of q.

    q' is a neighbor of q when intervals r, r' exist with purchases of q in r
    and q' in r' and |r - r'| <= delta_r. Quadratic in the catalog at full
    window; intended for desk-scale data.
    """
    if delta_r < 0:
        raise ConfigError(f"delta_r must be non-negative, got {delta_r}")
    pairs = ds.interval_item_pairs
    incidence = sparse.csr_matrix(
        (np.ones(len(pairs), dtype=np.int32), (pairs[:, 0], pairs[:, 1])),
        shape=(ds.n_intervals, ds.n_items),
    )
    if delta_r == 0:
        return _co_occurrence_sets(incidence, ds.n_items)
    # widen each item's interval support by +-delta_r, then co-occur
    dense = incidence.toarray().astype(bool)
    widened = np.zeros_like(dense)
    for shift in range(-delta_r, delta_r + 1):
        if shift >= 0:
            widened[shift:] |= dense[: ds.n_intervals - shift]
        else:
            widened[:shift] |= dense[-shift:]
    co = widened.T.astype(np.int32) @ dense.astype(np.int32)
    np.fill_diagonal(co, 0)
    return [np.flatnonzero(co[q]).astype(np.int64) for q in range(ds.n_items)]


@dataclass
class NeighborIndex:
    """The four per-item neighbor families plus their per-side unions.

    ``user_side`` unions the user-graph, CNN, and aesthetic sets (used when
    updating the user-preference half of the model); ``time_side`` unions
    the time-graph, CNN, and aesthetic sets. Immutable after build; shared
    read-only by training.
    """

    aesthetic: list
    semantic: list
    user_linked: list
    time_linked: list
    user_side: list = None
    time_side: list = None

    def __post_init__(self):
        n = len(self.aesthetic)
        for family in (self.semantic, self.user_linked, self.time_linked):
            if len(family) != n:
                raise DataError("neighbor families disagree on item count")
        for family in (self.aesthetic, self.semantic, self.user_linked, self.time_linked):
            for q, members in enumerate(family):
                if len(members) and (
                    (members < 0).any() or (members >= n).any()
                ):
                    raise DataError(f"neighbor set of item {q} has out-of-range members")
                if np.isin(q, members).any():
                    raise DataError(f"item {q} appears in its own neighbor set")
        if self.user_side is None:
            self.user_side = [
                _union(self.user_linked[q], self.semantic[q], self.aesthetic[q])
                for q in range(n)
            ]
        if self.time_side is None:
            self.time_side = [
                _union(self.time_linked[q], self.semantic[q], self.aesthetic[q])
                for q in range(n)
            ]

    @property
    def n_items(self) -> int:
        return len(self.aesthetic)

    def summary(self) -> dict:
        return {
            name: int(sum(len(s) for s in family))
            for name, family in (
                ("aesthetic", self.aesthetic),
                ("semantic", self.semantic),
                ("user_linked", self.user_linked),
                ("time_linked", self.time_linked),
            )
        }


def _union(*arrays):
    nonempty = [a for a in arrays if len(a)]
    if not nonempty:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(nonempty))


def _empty_family(n):
    return [np.empty(0, dtype=np.int64) for _ in range(n)]


def auto_cluster_count(n_items: int) -> int:
    """Default cluster count: average cluster size around 50 items."""
    return max(1, n_items // 50)


def build_neighbor_index(ds: Dataset, features: FeatureMatrix | None,
                         k_cnn: int | None = None, k_aes: int | None = None,
                         delta_r: int = 0, seed: int = 0) -> NeighborIndex:
    """Compose the four neighbor builders; deterministic for a fixed seed.

    ``k_cnn``/``k_aes`` of None pick :func:`auto_cluster_count`; 0 disables
    the family (empty sets). Feature-space families require a feature matrix.
    """
    n = ds.n_items
    if k_cnn is None:
        k_cnn = auto_cluster_count(n)
    if k_aes is None:
        k_aes = auto_cluster_count(n)
    if (k_cnn or k_aes) and features is None:
        raise ConfigError(
            "feature-space neighbor sets need a feature matrix; provide one "
            "or disable them with k_cnn=0 and k_aes=0"
        )
    if features is not None and features.n_items != n:
        raise DataError(
            f"feature matrix covers {features.n_items} items, dataset has {n}"
        )
    seed = seed & _SEED_MASK
    semantic = (
        cluster_neighbors(features, "cnn", k_cnn, [seed, 1]) if k_cnn else _empty_family(n)
    )
    aesthetic = (
        cluster_neighbors(features, "aesthetic", k_aes, [seed, 2]) if k_aes else _empty_family(n)
    )
    return NeighborIndex(
        aesthetic=aesthetic,
        semantic=semantic,
        user_linked=user_graph_neighbors(ds),
        time_linked=time_graph_neighbors(ds, delta_r),
    )


# ---------------------------------------------------------------------------
# Optional cache
# ---------------------------------------------------------------------------

def neighbor_cache_key(ds: Dataset, features: FeatureMatrix | None,
                       k_cnn, k_aes, delta_r: int, seed: int) -> str:
    """Content hash tying a cache file to its inputs."""
    h = hashlib.sha256()
    h.update(ds.positives.tobytes())
    h.update(struct.pack("<III", ds.n_users, ds.n_items, ds.n_intervals))
    if features is not None:
        h.update(features.matrix.astype("<f4").tobytes())
        h.update(struct.pack("<II", features.dim_cnn, features.dim_aes))
    h.update(repr((k_cnn, k_aes, delta_r, seed)).encode())
    return h.hexdigest()


def save_neighbor_index(path, index: NeighborIndex, key: str) -> None:
    out = bytearray()
    out += NEIGHBOR_CACHE_MAGIC
    key_bytes = key.encode("ascii")
    out += struct.pack("<I", len(key_bytes))
    out += key_bytes
    out += struct.pack("<I", index.n_items)
    for family in (index.aesthetic, index.semantic, index.user_linked, index.time_linked):
        for members in family:
            out += struct.pack("<I", len(members))
            out += np.asarray(members, dtype="<i4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_neighbor_index(path, expected_key: str) -> NeighborIndex | None:
    """Return the cached index, or None when the key does not match."""
    try:
        raw = open(path, "rb").read()
    except OSError:
        return None
    if raw[:4] != NEIGHBOR_CACHE_MAGIC:
        return None
    (key_len,) = struct.unpack_from("<I", raw, 4)
    key = raw[8: 8 + key_len].decode("ascii")
    if key != expected_key:
        return None
    off = 8 + key_len
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    families = []
    for _ in range(4):
        family = []
        for _ in range(n):
            (size,) = struct.unpack_from("<I", raw, off)
            off += 4
            members = np.frombuffer(raw, dtype="<i4", count=size, offset=off)
            family.append(members.astype(np.int64))
            off += 4 * size
        families.append(family)
    return NeighborIndex(*families)
