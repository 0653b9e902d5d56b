"""Exception hierarchy used across the toolkit.

The split mirrors how callers need to react: bad user input (dimensions,
malformed configs, indefinite covariances) versus numerical failures
(non-convergent series, unstable systems where stability is required).
The CLI maps InputError subclasses to exit code 1 and numeric failures
to exit code 2.
"""


class LtiboundError(Exception):
    """Base class for all toolkit-specific errors."""


class InputError(LtiboundError, ValueError):
    """Invalid user-supplied data: dimensions, values, or structure."""


class DimensionError(InputError):
    """Matrix or vector dimensions do not match the operation's contract."""


class StabilityError(LtiboundError, ValueError):
    """A matrix required to be Schur (spectral radius < 1) is not."""


class ConstraintError(LtiboundError, ValueError):
    """A bound-formula constraint (e.g. the lambda range) is violated."""


class UnsupportedStructureError(InputError):
    """The input lacks structure an operation depends on (e.g. block triangularity)."""


class NumericError(LtiboundError, RuntimeError):
    """A numerical routine failed (eigensolver breakdown, residual too large)."""


class ConvergenceError(NumericError):
    """An iterative computation failed to converge within its cap."""
