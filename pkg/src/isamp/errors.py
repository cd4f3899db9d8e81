"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, numeric and
domain failures exit 2, I/O failures (plain OSError) exit 3.
"""


class IsampError(Exception):
    """Base class for package errors."""


class UsageError(IsampError):
    """Missing or inconsistent arguments to an operation."""


class DomainError(IsampError, ValueError):
    """Input outside the mathematical domain of an operation."""


class UnsupportedError(IsampError):
    """Operation not available for this model (e.g. sampling an analytic pair)."""


class DegenerateBatchError(IsampError):
    """A weighted batch with no usable weight (all zero)."""


class ResourceError(IsampError):
    """Exact computation refused because it would exceed the enumeration cap."""


class NoSolutionError(IsampError):
    """A solver target that cannot be reached (e.g. bound floor above target)."""
