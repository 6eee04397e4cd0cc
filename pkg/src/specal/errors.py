"""Exception hierarchy.

Data problems (bad files, misaligned sets) derive from :class:`DataError`;
numerical breakdowns (degenerate spectra, rank loss, divergence) from
:class:`NumericalError`; invalid arguments from :class:`ParameterError`.
The CLI maps these three families to exit codes 2, 3 and 1.
"""


class SpecalError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SpecalError, ValueError):
    """An argument is outside its admissible range."""


class InfeasiblePlanError(ParameterError):
    """A split plan cannot be realised for the given sample count."""


class ShapeError(ParameterError):
    """Array dimensions do not match what the operation expects."""


class DataError(SpecalError, ValueError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    """A CSV cell could not be parsed; message names row and column."""


class FormatError(DataError):
    """File layout violates the expected format (e.g. wavelength headers)."""


class EmptyDatasetError(DataError):
    """A dataset has no samples."""


class AlignmentError(DataError):
    """Two spectra sets do not share axis, ids or targets."""


class MissingReferenceError(DataError):
    """MSC was requested without a fitted reference spectrum."""


class NumericalError(SpecalError, ArithmeticError):
    """A computation broke down numerically."""


class DomainError(NumericalError):
    """Input lies outside the mathematical domain (e.g. log of zero)."""


class DegenerateError(NumericalError):
    """Zero variance where variance is required."""


class RankExhaustedError(NumericalError):
    """PLS ran out of covariance before reaching the requested components."""

    def __init__(self, message: str, n_components_ok: int):
        super().__init__(message)
        self.n_components_ok = n_components_ok


class DivergenceError(NumericalError):
    """Training loss became non-finite."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class AllFoldsFailedError(NumericalError):
    """Every cross-validation cell of a run failed."""
