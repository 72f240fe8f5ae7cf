"""Exception hierarchy.

Each error class carries the CLI exit code it maps to, so the command line
front-end can translate failures without inspecting messages.
"""


class PrnuFuseError(Exception):
    exit_code = 1


class FormatError(PrnuFuseError):
    """Malformed or unsupported file content."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionError(PrnuFuseError, ValueError):
    exit_code = 3


class DegenerateInputError(PrnuFuseError, ValueError):
    """Zero-norm operand or otherwise information-free input."""

    exit_code = 3


class ArgumentError(PrnuFuseError, ValueError):
    exit_code = 2


class StateError(PrnuFuseError, RuntimeError):
    exit_code = 4


class TrainingError(PrnuFuseError, RuntimeError):
    exit_code = 4


class ConfigurationError(PrnuFuseError):
    exit_code = 4


class LookupFailure(PrnuFuseError, LookupError):
    exit_code = 3
