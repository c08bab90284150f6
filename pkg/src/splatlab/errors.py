"""Exception taxonomy shared by the library and the CLI exit-code mapping."""


class SplatlabError(Exception):
    """Base class for all splatlab errors."""


class InvalidInputError(SplatlabError):
    """Caller-supplied data violates a documented precondition (CLI exit 2)."""


class ParseError(InvalidInputError):
    """A text input could not be parsed; carries file path and 1-based line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = int(line)
        super().__init__(f"{self.path}:{self.line}: {message}")


class InternalConsistencyError(SplatlabError):
    """A computed intermediate violated an internal invariant (CLI exit 3)."""
