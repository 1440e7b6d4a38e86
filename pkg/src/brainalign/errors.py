"""Exception types shared across the package."""


class TensorFormatError(ValueError):
    """Raised when a tensor file violates the binary format contract."""


class ManifestError(ValueError):
    """Raised when a dataset manifest cannot be parsed at all.

    Content-level problems (bad repetition counts, dangling ids, ...) are
    reported through :func:`brainalign.dataset.validate_manifest` instead,
    which collects violations without raising.
    """


class ZeroVarianceError(ValueError):
    """Raised when a correlation is requested for a constant vector."""


class GridMismatchError(ValueError):
    """Raised when per-voxel maps from different sources do not share a grid."""


class ConfigError(ValueError):
    """Raised for malformed run configurations (CLI exit code 2)."""
