"""Planted-structure synthetic data for desk-scale verification.

The generator plants low-rank user-item and time-item score matrices plus a
feature-driven preference component, emits features correlated with the
planted item factors, thresholds the highest-scoring (user, item, interval)
cells into positives, and splits them like real data. The planted scorer is
returned so tests can compare trained models against the generating truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SplitBundle, split_dataset
from .errors import ConfigError, DataError
from .features import FeatureMatrix

_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Sizes, planted ranks, and the feature share of the planted preference."""

    n_users: int = 300
    n_items: int = 300
    n_intervals: int = 20
    true_rank_1: int = 8
    true_rank_2: int = 8
    feature_dim: int = 24
    feature_signal: float = 0.6
    density: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.n_intervals) < 1:
            raise ConfigError("sizes must be at least 1")
        if min(self.true_rank_1, self.true_rank_2) < 1:
            raise ConfigError("planted ranks must be positive")
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be at least 2")
        if not 0.0 <= self.feature_signal <= 1.0:
            raise ConfigError("feature_signal must lie in [0, 1]")
        if not 0.0 < self.density <= 1.0:
            raise ConfigError("density must lie in (0, 1]")


class PlantedScorer:
    """The generating model, exposed with the shared scorer interface."""

    def __init__(self, s1, s2):
        self.s1 = s1  # (P, Q)
        self.s2 = s2  # (R, Q)

    def item_scores(self, features, p: int, r: int):
        return self.s1[p] * self.s2[r]


class RandomScorer:
    """Seeded noise scorer; the floor any planted model must clear."""

    def __init__(self, n_items: int, seed: int = 0):
        self.n_items = n_items
        self.seed = seed & _SEED_MASK

    def item_scores(self, features, p: int, r: int):
        rng = np.random.default_rng([self.seed, p, r])
        return rng.standard_normal(self.n_items)


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    dataset: Dataset
    bundle: SplitBundle
    features: FeatureMatrix
    planted: PlantedScorer
    planted_blocks: dict


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Draw planted factors, correlated features, and threshold positives.

    Features mix a loading of the planted item factors with independent
    noise in proportion ``feature_signal``; the feature-driven preference
    term is scaled by the same signal so a zero signal leaves a purely
    factor-driven dataset with noise features.
    """
    rng = np.random.default_rng(spec.seed & _SEED_MASK)
    n_users, n_items, n_intervals = spec.n_users, spec.n_items, spec.n_intervals
    k1, k2, d = spec.true_rank_1, spec.true_rank_2, spec.feature_dim
    s = spec.feature_signal

    user_f = rng.standard_normal((k1, n_users)) / np.sqrt(k1)
    item_f = rng.standard_normal((k1, n_items))
    time_f = rng.standard_normal((k2, n_intervals)) / np.sqrt(k2)
    item_time_f = rng.standard_normal((k2, n_items))

    loadings = rng.standard_normal((d, k1)) / np.sqrt(k1)
    noise = rng.standard_normal((d, n_items))
    feats = s * (loadings @ item_f) + (1.0 - s) * noise

    user_vis = s * rng.standard_normal((d, n_users)) / np.sqrt(d)
    time_vis = s * rng.standard_normal((d, n_intervals)) / np.sqrt(d)

    s1 = user_f.T @ item_f + user_vis.T @ feats
    s2 = time_f.T @ item_time_f + time_vis.T @ feats

    scores = np.einsum("pq,rq->pqr", s1, s2)
    n_cells = scores.size
    n_pos = int(round(spec.density * n_cells))
    if n_pos < 1:
        raise DataError(
            f"density {spec.density} yields zero positives for {n_cells} cells"
        )
    flat = scores.reshape(-1)
    top = np.argpartition(-flat, n_pos - 1)[:n_pos]
    p_idx, q_idx, r_idx = np.unravel_index(top, scores.shape)
    positives = np.stack([p_idx, q_idx, r_idx], axis=1)

    ds = Dataset(
        [f"u{i}" for i in range(n_users)],
        [f"i{i}" for i in range(n_items)],
        n_intervals,
        positives,
    )
    bundle = split_dataset(ds, (0.8, 0.1, 0.1), seed=spec.seed)
    dim_cnn = d // 2
    features = FeatureMatrix(dim_cnn, d - dim_cnn, feats.T.copy())
    return SyntheticData(
        spec=spec,
        dataset=ds,
        bundle=bundle,
        features=features,
        planted=PlantedScorer(s1, s2),
        planted_blocks={
            "user_factors": user_f,
            "item_factors": item_f,
            "time_factors": time_f,
            "item_time_factors": item_time_f,
            "user_visual": user_vis,
            "time_visual": time_vis,
            "loadings": loadings,
        },
    )


_SPEC_FIELDS = {
    "n_users": int,
    "n_items": int,
    "n_intervals": int,
    "true_rank_1": int,
    "true_rank_2": int,
    "feature_dim": int,
    "feature_signal": float,
    "density": float,
    "seed": int,
}


def load_synthetic_spec(path) -> SyntheticSpec:
    """Parse a key=value file into a :class:`SyntheticSpec`."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _SPEC_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown synthetic key {key!r}")
        values[key] = _SPEC_FIELDS[key](value.strip())
    return SyntheticSpec(**values)
