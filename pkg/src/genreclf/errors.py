"""Package exception hierarchy, mapped to CLI exit codes."""


class GenreclfError(Exception):
    """Base for all package-specific failures."""


class ConfigError(GenreclfError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(GenreclfError):
    """Malformed datasets, manifests or feature files (CLI exit code 3)."""


class MmfFormatError(DataError):
    """Structurally invalid .mmf feature container."""


class NumericError(GenreclfError):
    """Non-finite values encountered during training (CLI exit code 4)."""
