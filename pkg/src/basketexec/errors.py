"""Exception types shared across the package."""


class BasketExecError(Exception):
    """Base class for every error raised by basketexec."""


class ClipExceeded(BasketExecError):
    """A trade is larger than the per-step clip size M for its asset."""


class InventoryExceeded(BasketExecError):
    """Cumulative sales would exceed the shares available to liquidate."""


class Asymmetric(BasketExecError):
    """A matrix that must be symmetric is not, beyond tolerance."""


class NotPositiveSemiDefinite(BasketExecError):
    """Covariance factorization hit a negative pivot."""


class ZeroVolume(BasketExecError):
    """Market VWAP requested over a window with zero traded volume."""


class NoExecutions(BasketExecError):
    """Trader VWAP requested before any shares were executed."""


class NonFiniteLogit(BasketExecError):
    """A policy logit came out NaN or infinite."""


class NonFiniteWeights(BasketExecError):
    """Training produced non-finite actor or critic weights."""


class EmptyBuffer(BasketExecError):
    """Sampled from a replay buffer that holds no transitions."""


class NonConvergence(BasketExecError):
    """Value iteration hit its iteration cap before reaching tolerance."""


class InsufficientData(BasketExecError):
    """Too few bars to estimate the requested parameter."""


class ParseError(BasketExecError):
    """Malformed row in an input file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingSymbol(BasketExecError):
    """A requested symbol never appears in the input file."""


class NonMonotoneTimestamps(BasketExecError):
    """Bar timestamps are not strictly increasing for some symbol."""


class MissingFile(BasketExecError):
    """A referenced input file does not exist."""
