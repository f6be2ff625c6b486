"""Exception hierarchy.

Every error raised by the package derives from :class:`TdsvError`.  The two
intermediate classes decide the command-line exit code: :class:`DataError`
(malformed or inconsistent inputs, exit 2) and :class:`NumericError`
(degenerate numerics such as a zero-variance cohort, exit 3).
"""


class TdsvError(Exception):
    """Base class for all package errors."""


class DataError(TdsvError, ValueError):
    """Input data is malformed, incomplete or inconsistent."""


class FormatError(DataError):
    """A file does not conform to its format.

    ``path`` and ``where`` (a line number, record number or byte offset,
    already rendered as text) are kept so callers can report them.
    """

    def __init__(self, message, path=None, where=None):
        self.path = str(path) if path is not None else None
        self.where = where
        prefix = ""
        if self.path is not None:
            prefix = self.path
            if where is not None:
                prefix += f" ({where})"
            prefix += ": "
        elif where is not None:
            prefix = f"{where}: "
        super().__init__(prefix + message)


class MissingHeaderError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class DimensionMismatchError(FormatError):
    pass


class DuplicateIdError(FormatError):
    pass


class NonFiniteError(FormatError):
    pass


class ColumnCountError(FormatError):
    pass


class UnknownLabelError(FormatError):
    pass


class ValueRangeError(FormatError):
    """A field parses but lies outside its allowed range."""


class ProbabilitySumError(FormatError):
    pass


class UnresolvedIdError(DataError):
    """A trial, model or utterance id cannot be found."""


class StrictEnrollmentError(DataError):
    pass


class MisalignedScoresError(DataError):
    pass


class EmptyClassError(DataError):
    """A target or non-target score set is empty."""


class NoTargetsError(EmptyClassError):
    pass


class UnlabeledTrialError(DataError):
    pass


class NumericError(TdsvError, ArithmeticError):
    """A computation hit a degenerate case it cannot proceed through."""


class ZeroNormError(NumericError):
    pass


class DegenerateCentroidError(NumericError):
    pass


class DegenerateCohortError(NumericError):
    pass


class GateFloorError(NumericError):
    """An accepted score is not strictly above the rejection floor."""
