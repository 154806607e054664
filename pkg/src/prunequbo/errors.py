"""Exception and warning types shared across the toolkit."""


class PruneQuboError(Exception):
    """Base class for all toolkit errors."""


class ParseError(PruneQuboError):
    """A problem/config/export file could not be parsed."""


class ValidationError(PruneQuboError):
    """A data invariant was violated; the message names the field and index."""


class ArgumentError(PruneQuboError, ValueError):
    """An argument is outside its documented domain."""


class MissingDataError(PruneQuboError):
    """A QUBO variant requires statistics the problem does not carry."""


class DimensionError(PruneQuboError, ValueError):
    """Vector/matrix sizes do not match."""


class SizeError(PruneQuboError):
    """Problem too large for an exhaustive operation."""


class BracketError(PruneQuboError):
    """The capacity-coefficient bracket could not be established."""


class EvaluationError(PruneQuboError):
    """An objective evaluation failed (external process, protocol, timeout)."""


class DegenerateError(PruneQuboError):
    """A probability degenerated to zero where positive mass is required."""


class ConvergenceWarning(RuntimeWarning):
    """Power iteration did not stabilize; the last estimate was used."""


class DegenerateComponentWarning(RuntimeWarning):
    """A constant component was scaled by 1/eps during normalization."""
