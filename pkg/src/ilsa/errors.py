"""Exception taxonomy shared across the package."""


class IlsaError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(IlsaError):
    """Invalid task description, rule, file, or CLI configuration."""


class ShapeError(IlsaError):
    """Tensor/parameter shape mismatch; message names the offending entries."""


class TrainingError(IlsaError):
    """Training diverged (NaN loss or gradients) or was given unusable data."""
