"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2,
MissingArtifactError -> 3, NumericError -> 4, FormatError and OSError -> 5.
"""


class DtekitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DtekitError):
    """Bad configuration value, malformed input file, or inconsistent setup."""


class MissingArtifactError(DtekitError):
    """A required on-disk artifact is absent; message names the producing command."""


class NumericError(DtekitError):
    """Training or inference produced non-finite values."""


class FormatError(DtekitError):
    """Binary artifact has a wrong magic string or an unsupported version."""
