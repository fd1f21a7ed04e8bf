"""Exception types shared across the package.

Every error that can cross the CLI or the stdio-service boundary carries a
stable ``code`` string so external callers can match on it without parsing
messages.
"""


class PhasekitError(Exception):
    code = "E_INTERNAL"


class InputError(PhasekitError):
    """Invalid argument values: shapes, lengths, non-finite samples."""

    code = "E_INPUT"


class LengthMismatchError(InputError):
    code = "E_LENGTH_MISMATCH"


class FormatError(PhasekitError):
    """Malformed or truncated WAV container."""

    code = "E_FORMAT"


class UnsupportedFormatError(FormatError):
    """Well-formed WAV using an encoding this package does not read."""

    code = "E_UNSUPPORTED_FORMAT"


class UnsupportedConfigError(PhasekitError):
    """STFT configuration without a stable inverse (overlap-add gaps)."""

    code = "E_UNSUPPORTED_CONFIG"


class FieldTooSmallError(InputError):
    """Spectrogram too small to host a 3x3 neighborhood."""

    code = "E_FIELD_TOO_SMALL"


class UnknownConfigError(PhasekitError):
    """A config id that was never registered with the service."""

    code = "E_UNKNOWN_CONFIG"


class ConfigError(PhasekitError):
    """Bad run configuration: unknown keys, unparseable or invalid values."""

    code = "E_CONFIG"
