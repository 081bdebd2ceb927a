"""Exception hierarchy.

The CLI maps each branch to an exit code: manifest problems exit 1,
ingest and alignment problems exit 2, statistical degeneracies exit 3.
"""

from __future__ import annotations


class MetaEvalError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(MetaEvalError):
    """The experiment manifest is missing keys or holds invalid values."""


class ParseError(MetaEvalError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class DuplicateEntryError(ParseError):
    pass


class AlignmentError(MetaEvalError):
    """Two inputs that must cover the same ids do not."""

    def __init__(self, message: str, missing: tuple[str, ...] = ()):
        self.missing = missing
        super().__init__(message)


class StatisticsError(MetaEvalError, ValueError):
    """Base for degenerate or out-of-domain statistical inputs."""


class DomainError(StatisticsError):
    pass


class InsufficientPairsError(StatisticsError):
    pass


class DegenerateSamplesError(StatisticsError):
    pass


class FamilyMismatchError(StatisticsError):
    pass


class ZeroVarianceError(StatisticsError):
    pass


class RenderError(MetaEvalError):
    pass
