"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid, inconsistent, or unreadable experiment configuration."""


class DivergenceError(Exception):
    """Training produced a non-finite loss."""


class FormatError(Exception):
    """Malformed on-disk artifact (snapshot, dataset manifest, report)."""


class SnapshotFormatError(FormatError):
    """Malformed or truncated parameter snapshot file."""
