"""Exception hierarchy. The CLI maps these onto distinct exit codes."""


class MetahmmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MetahmmError):
    """An environment configuration violates a named constraint."""


class GenerationError(MetahmmError):
    """Bank construction hit infeasible geometry or could not draw distinct blocks."""


class ValidationError(MetahmmError):
    """A runtime argument is malformed (bad index, non-distribution, bad range)."""


class FormatError(MetahmmError):
    """A sequence or prediction file is corrupt, truncated, or mis-versioned."""


class AlignmentError(MetahmmError):
    """Two prediction streams do not cover the same (sequence_id, t) keys."""


class NumericalError(MetahmmError):
    """Filtering produced a state no further computation can proceed from."""


class ImpossibleEvidenceError(NumericalError):
    """Every task in the mixture assigned probability zero to an observed symbol."""


class ImpossiblePrefixError(NumericalError):
    """A single conditioning task assigned probability zero to an observed symbol."""
