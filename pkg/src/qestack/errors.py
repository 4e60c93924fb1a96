"""Exception types shared across the toolkit.

Everything user-facing derives from :class:`QEStackError`; the CLI maps these
to exit code 1 and genuine I/O failures (``OSError``) to exit code 2.
"""


class QEStackError(Exception):
    """Base class for all toolkit errors."""


class ParseError(QEStackError):
    """A file holds something that cannot be interpreted (bad tag, bad float,
    empty line, malformed alignment pair)."""

    def __init__(self, message, *, file=None, line=None):
        self.file = file
        self.line = line
        super().__init__(_located(message, file, line))


class LengthMismatch(QEStackError):
    """Per-line or cross-file length invariants are violated."""

    def __init__(self, message, *, file=None, line=None):
        self.file = file
        self.line = line
        super().__init__(_located(message, file, line))


class RangeError(QEStackError):
    """A numeric value lies outside its allowed interval."""

    def __init__(self, message, *, file=None, line=None):
        self.file = file
        self.line = line
        super().__init__(_located(message, file, line))


class EmptyInput(QEStackError):
    """A metric was asked to score zero tags."""


class DegenerateInput(QEStackError):
    """Correlation of a constant or too-short vector is undefined."""


class InconsistentScript(QEStackError):
    """An edit script does not cover the MT sentence it claims to describe."""


class MissingStream(QEStackError):
    """A system listed for ensembling does not provide the requested stream."""


class ZeroWeights(QEStackError):
    """An ensemble weight vector sums to zero and cannot be normalized."""


class SingularSystem(QEStackError):
    """The unregularized normal equations are singular."""


class SpanOutOfBounds(QEStackError):
    """An annotation span points outside its sentence."""


def _located(message, file, line):
    if file is not None and line is not None:
        return f"{file}:{line}: {message}"
    if file is not None:
        return f"{file}: {message}"
    return message
