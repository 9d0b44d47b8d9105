"""Exception hierarchy shared by the library modules and the CLI.

Each error carries the process exit code the CLI reports for it.
"""


class ChangePointError(Exception):
    exit_code = 1


class InputError(ChangePointError):
    """Unreadable, empty or non-numeric input data, or a malformed config file."""
    exit_code = 2


class ParameterError(ChangePointError, ValueError):
    """A required parameter is missing or outside its valid range."""
    exit_code = 3


class DomainError(ParameterError):
    """An asymptotic formula was called outside the region where it holds."""


class ResourceError(ChangePointError):
    """The requested simulation does not fit the available methods or memory."""
    exit_code = 4
