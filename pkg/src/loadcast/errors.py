"""Exception types shared across the package."""


class LoadcastError(Exception):
    """Base class for all package-specific errors."""


class MissingColumn(LoadcastError):
    """A required CSV column is absent."""


class BadDate(LoadcastError):
    """A date cell is unparseable or implies a negative booking lead."""


class NegativeSeats(LoadcastError):
    """A seat count is negative (or a capacity is non-positive)."""


class ConflictingAircraft(LoadcastError):
    """Merged legs disagree on aircraft type (strict mode only)."""


class InvalidConfig(LoadcastError):
    """A configuration value is out of its legal range."""


class UnknownRoute(LoadcastError):
    """A snapshot references a route with no metadata."""


class ZeroCapacity(LoadcastError):
    """Load factor requested for a flight with zero total seats."""


class InsufficientHistory(LoadcastError):
    """Not enough snapshots or historical flights to build a sequence."""


class EmptyPartition(LoadcastError):
    """A chronological split produced an empty partition."""


class ConstantColumn(LoadcastError):
    """Correlation is undefined for a constant column."""


class SingularSystem(LoadcastError):
    """A linear system could not be solved without regularisation."""


class ShapeMismatch(LoadcastError):
    """Tensor shapes do not conform for the requested operation."""


class IllegalSpec(LoadcastError):
    """A model specification combines incompatible options."""


class DivergenceDetected(LoadcastError):
    """Training produced a non-finite loss."""


class NumericError(LoadcastError):
    """A numeric computation produced non-finite values."""


class ZeroNaiveError(LoadcastError):
    """MASE is undefined because the naive benchmark has zero error."""


class MissingInput(LoadcastError):
    """A declared input file does not exist."""
