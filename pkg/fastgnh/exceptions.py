"""
Exception hierarchy shared by the library and the CLI.

Every exception carries the exit code the CLI uses when the error escapes a
command, so scripted runs can tell a malformed input file from an
indefinite matrix without parsing messages.
"""


class FastGnhError(Exception):
    exit_code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return self.message


class ConfigError(FastGnhError):
    exit_code = 2


class FormatError(FastGnhError):
    """Raised for malformed input files. `offset` is the byte offset at which
    parsing failed, when known."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(FastGnhError):
    exit_code = 4


class ResourceError(FastGnhError):
    exit_code = 5


class SizeError(ResourceError):
    """Raised when a dense object would exceed its size guard."""


class DefinitenessError(FastGnhError):
    exit_code = 6


class NumericError(FastGnhError):
    exit_code = 7


class CapabilityError(FastGnhError):
    exit_code = 8


class TrainingError(FastGnhError):
    exit_code = 9
