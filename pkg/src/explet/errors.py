"""Exception hierarchy.

Three fault families map onto the CLI exit codes: configuration problems
(2), data problems (3), and numerical failures (4). Anything else escapes
as a plain traceback (1).
"""


class ExpletError(Exception):
    exit_code = 1


class ConfigError(ExpletError):
    exit_code = 2


class DataError(ExpletError):
    exit_code = 3


class NumericError(ExpletError):
    exit_code = 4


# --- data faults ---

class EmptyGrid(DataError):
    """Block sampling grid has zero positions along some axis."""


class BadBlockShape(DataError):
    """Descriptor input does not meet its shape contract."""


class IndexOutOfGrid(DataError):
    """Grid index outside the sampled block grid."""


class DimMismatch(DataError):
    """Vector dimension differs from what a model expects."""


class TooFewSamples(DataError):
    """Not enough samples to fit the requested model."""


class EmptyStm(DataError):
    """A clip carries no block features."""


class SingleClass(DataError):
    """An operation that needs >= 2 classes got one."""


class WrongCount(DataError):
    """A fixed-arity operation received the wrong number of items."""


class TooFewSubjects(DataError):
    """Fewer subjects than cross-validation folds."""


class MissingPrediction(DataError):
    """Ground-truth id with no matching prediction."""


# --- config faults ---

class BadK(ConfigError):
    """Mode count incompatible with the rigid blocking scheme."""


# --- numerical faults ---

class DegenerateData(NumericError):
    """Zero-rank data where a decomposition needs signal."""


class NotSpd(NumericError):
    """Matrix expected to be symmetric positive definite is not."""


class IllConditioned(NumericError):
    """Scatter matrix rank-deficient even after ridge regularization."""
