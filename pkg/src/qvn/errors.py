"""Exception hierarchy shared across the package."""


class QvnError(Exception):
    """Base class for every error raised by :mod:`qvn`."""


class DimensionError(QvnError, ValueError):
    """Wire indices or dimensions are inconsistent."""


class InvalidStateError(QvnError, ValueError):
    """A matrix fails positivity, trace or Hermiticity checks."""


class InvalidChannelError(QvnError, ValueError):
    """A channel or program is not CPTP (or not a valid Choi state)."""


class HeraldedFailure(QvnError):
    """A repeat-until-success protocol ran out of attempts."""


class ProgramNotFound(QvnError, KeyError):
    """No program is stored under the requested name."""

    def __str__(self):
        return f"program {self.args[0]!r} not found" if self.args else "program not found"


class RegistryError(QvnError):
    pass


class ParseError(QvnError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
