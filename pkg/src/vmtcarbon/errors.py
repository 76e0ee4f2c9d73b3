"""Exception hierarchy shared across the package.

The three leaf types map onto the CLI exit-code contract: bad inputs or
schemas (exit 2), mutually inconsistent datasets (exit 3), and numerical
estimation failures (exit 4).
"""


class VmtCarbonError(Exception):
    """Base class for all package errors."""


class ValidationError(VmtCarbonError):
    """Input data, schema, or argument violates a documented contract."""


class ConsistencyError(VmtCarbonError):
    """Inputs are individually valid but mutually inconsistent."""


class EstimationError(VmtCarbonError):
    """A numerical procedure failed to produce a usable estimate."""
