"""Implicit-feedback recommendation over (user, item, time) purchase events.

The library factorizes a binary purchase tensor into two multiplicative
preference scores (user-item affinity and time-item fit), optionally fuses
precomputed visual feature vectors into both scores, and trains by pairwise
ranking with a middle preference tier of neighbor items. Baseline rankers,
top-n evaluation, a synthetic data generator, and an experiment CLI are
included.
"""

from .errors import AesrecError, ConfigError, DataError, TrainingDivergedError

__version__ = "0.1.0"

__all__ = [
    "AesrecError",
    "ConfigError",
    "DataError",
    "TrainingDivergedError",
    "__version__",
]
