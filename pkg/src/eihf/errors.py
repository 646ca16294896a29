"""Exception types shared across the library.

The CLI maps these onto exit codes: validation and format problems exit
with code 2, anything else is an internal error and exits with code 1.
"""


class EihfError(Exception):
    """Base class for all library errors."""


class FormatError(EihfError):
    """A file does not conform to its declared on-disk format."""


class ValidationError(EihfError):
    """An input violates a documented precondition or invariant."""


class TransformMismatchError(ValidationError):
    """Test-time transform parameters differ from those baked into fitted statistics."""
