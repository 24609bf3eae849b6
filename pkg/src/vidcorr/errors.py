"""Exception types shared across the library.

The CLI maps these onto exit codes: parameter problems are usage errors,
data problems are payload errors, internal check failures are bugs.
"""


class VidcorrError(Exception):
    """Base class for all errors raised by this library."""


class ParameterError(VidcorrError, ValueError):
    """A caller-supplied argument violates an operation precondition."""


class DataError(VidcorrError, ValueError):
    """File contents or array payloads are malformed or inconsistent."""


class InternalCheckError(VidcorrError, RuntimeError):
    """An internal invariant failed; indicates a bug, not bad input."""
