"""Exception taxonomy and CLI exit codes.

Validation problems (bad inputs, contract violations) are distinct from
protocol problems (a remote scorer misbehaving) so callers can decide what
is retryable and the CLI can map each family to a stable exit code.
"""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROTOCOL = 3
EXIT_IO = 4


class NNIntentError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_VALIDATION


class ValidationError(NNIntentError):
    """Input data or arguments violate a documented contract."""

    exit_code = EXIT_VALIDATION


class FormatError(ValidationError):
    """A file does not parse as its documented format."""


class CapabilityError(ValidationError):
    """An operation was requested from a scorer that does not support it."""


class ProtocolError(NNIntentError):
    """A remote scorer sent a malformed or inconsistent reply. Not retryable."""

    exit_code = EXIT_PROTOCOL


class TransportError(NNIntentError):
    """The connection to a remote scorer failed. Retryable by the caller."""

    exit_code = EXIT_PROTOCOL


class ExperimentError(NNIntentError):
    """Every run of an experiment failed."""
