"""Exception types shared across the package."""


class AesrecError(Exception):
    """Base class for all library errors."""


class ConfigError(AesrecError):
    """Bad configuration: unknown model kind, missing path, invalid value."""


class DataError(AesrecError):
    """Bad or inconsistent data: parse failures, validation failures."""


class TrainingDivergedError(AesrecError):
    """Parameters became non-finite or exploded during optimization."""
