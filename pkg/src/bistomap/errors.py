"""Exception types shared across the package."""


class BistomapError(Exception):
    """Base class for all library-specific errors."""


class IngestionError(BistomapError):
    """A data file could not be parsed; the message names the offending line."""


class DegenerateDataError(BistomapError):
    """The point configuration cannot support the requested computation."""


class AssumptionViolationError(BistomapError):
    """Density positivity or finiteness requirements failed.

    Carries the indices of the offending data rows and reference columns
    when they are known, so callers can report exactly what went wrong.
    """

    def __init__(self, message, *, rows=(), columns=()):
        super().__init__(message)
        self.rows = tuple(int(i) for i in rows)
        self.columns = tuple(int(j) for j in columns)


class NumericalError(BistomapError):
    """A numerical routine produced an out-of-contract result.

    This signals an upstream bug or corrupted input, not ordinary
    floating-point noise.
    """


class ExtensionError(BistomapError):
    """The fitted model cannot evaluate affinities at new points."""
