"""Exception hierarchy with stable CLI exit codes.

Exit codes: 0 success, 2 input error, 3 scoring policy error,
4 statistical degeneracy.
"""


class CobraError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(CobraError):
    """Malformed, inconsistent, or out-of-contract input data."""

    exit_code = 2


class PolicyError(CobraError):
    """A configured policy rejected an otherwise valid input."""

    exit_code = 3


class DegeneracyError(CobraError):
    """A statistic was requested on degenerate or insufficient data."""

    exit_code = 4


# --- record validation ---

class WrongArity(InputError):
    """Probability vector does not have the dataset-wide number of classes."""


class NegativeEntry(InputError):
    """Probability vector contains a negative entry."""


class SumOutOfTolerance(InputError):
    """Probability vector does not sum to 1 within tolerance."""


# --- scoring ---

class EmptyRelevantSubset(PolicyError):
    """No datapoint of a subject was predicted in a relevant class."""


# --- statistics ---

class LengthMismatch(InputError):
    """Paired sequences have different lengths."""


class DegenerateVariance(DegeneracyError):
    """A variable is constant, so correlation is undefined."""


class TooFewPairs(DegeneracyError):
    """Not enough pairs for the requested statistic."""


class RhoOutOfRange(InputError):
    """Correlation coefficient outside the open interval (-1, 1)."""


class TooManyDegenerateResamples(DegeneracyError):
    """Bootstrap kept drawing constant resamples and gave up."""


class InsufficientOverlap(DegeneracyError):
    """Fewer than three subjects joinable across the two inputs."""


class DegenerateData(DegeneracyError):
    """Density estimation requested on fewer than two distinct values."""


class MissingLabels(InputError):
    """Performance metrics requested on records without true labels."""


# --- feature distances ---

class TooFewRows(InputError):
    """A feature set has fewer than two rows."""


class NotSymmetric(InputError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class DimensionMismatch(InputError):
    """Operands have incompatible dimensions."""


# --- reference model ---

class LabelOutOfRange(InputError):
    """A training label falls outside the configured class range."""


class CheckpointError(InputError):
    """Model checkpoint is unreadable or its arrays disagree with the declared sizes."""
