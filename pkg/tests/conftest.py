"""Shared fixtures: tiny hand-built datasets and the neighbor-set fixture
with three positives whose sets (sizes 2, 2, 5) share one item."""

import numpy as np
import pytest

from aesrec.data import Dataset
from aesrec.features import FeatureMatrix
from aesrec.neighbors import NeighborIndex


@pytest.fixture
def tiny_dataset():
    # 3 users, 5 items, 2 intervals
    triples = [
        (0, 0, 0), (0, 1, 0), (0, 2, 1),
        (1, 1, 0), (1, 3, 1),
        (2, 4, 1),
    ]
    return Dataset(["u0", "u1", "u2"], [f"i{i}" for i in range(5)], 2, triples)


@pytest.fixture
def tiny_features():
    rng = np.random.default_rng(0)
    return FeatureMatrix(3, 3, rng.normal(size=(5, 6)))


def _empty_sets(n):
    return [np.empty(0, dtype=np.int64) for _ in range(n)]


@pytest.fixture
def shared_neighbor_fixture():
    """User 0 bought items 0, 1, 2 in interval 0; their neighbor sets are
    {3,4}, {3,5}, {3,6,7,8,9}; items 10..15 pad the unlabeled pool."""
    n = 16
    ds = Dataset(["p"], [f"i{i}" for i in range(n)], 1,
                 [(0, 0, 0), (0, 1, 0), (0, 2, 0)])
    aes = _empty_sets(n)
    aes[0] = np.array([3, 4], dtype=np.int64)
    aes[1] = np.array([3, 5], dtype=np.int64)
    aes[2] = np.array([3, 6, 7, 8, 9], dtype=np.int64)
    aes[3] = np.array([0, 1, 2], dtype=np.int64)
    aes[4] = np.array([0], dtype=np.int64)
    aes[5] = np.array([1], dtype=np.int64)
    for j in (6, 7, 8, 9):
        aes[j] = np.array([2], dtype=np.int64)
    nbr = NeighborIndex(
        aesthetic=aes,
        semantic=_empty_sets(n),
        user_linked=_empty_sets(n),
        time_linked=_empty_sets(n),
    )
    return ds, nbr
