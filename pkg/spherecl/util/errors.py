"""
:module: spherecl.util.errors
:purpose:
    Named exception classes shared across the package. Each one subclasses
    the built-in exception a caller would naturally catch, so
    ``except ValueError`` keeps working around validation failures.
"""


class ZeroRow(ValueError):
    """A row handed to normalization has (numerically) zero norm"""


class NotOnSphere(ValueError):
    """An embedding row is not unit-norm within tolerance"""


class DimensionMismatch(ValueError):
    """Two batches that must share a shape or ambient dimension do not"""


class DegenerateStep(ValueError):
    """A retraction was asked to normalize a (numerically) zero vector"""


class InvalidArity(ValueError):
    """A configuration check was given a point count it cannot certify"""


class ArityError(ValueError):
    """A loss or metric needs more points than it was given"""


class SingularEvaluation(ArithmeticError):
    """A kernel (or one of its derivatives) was evaluated where it is unbounded"""


class ConditionViolation(ValueError):
    """A kernel fails the monotonicity screen a theorem check depends on"""


class NonFiniteLoss(ArithmeticError):
    """Every optimizer restart produced a non-finite loss"""


class ConfigError(ValueError):
    """An experiment configuration does not match the strict schema"""


class BatchEvaluationError(RuntimeError):
    """A loss evaluation failed inside Monte Carlo batch estimation

    :param batch_index: index of the failing batch
    :type batch_index: int
    :param message: description of the failure
    :type message: str
    """
    def __init__(self, batch_index, message):
        super().__init__(f'batch {batch_index}: {message}')
        self.batch_index = batch_index
