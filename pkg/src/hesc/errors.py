"""Exception hierarchy.

Each error carries an ``exit_code`` so the command line front end can map
module failures to distinct process exit statuses.
"""


class HescError(Exception):
    exit_code = 1


class ConfigError(HescError):
    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NotConverged(HescError):
    """Window doubling hit ``r_max`` before the element settled."""

    exit_code = 3

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = list(log or [])


class NumericPrecondition(HescError):
    exit_code = 4


class NyquistViolation(NumericPrecondition):
    pass


class ZeroVelocity(NumericPrecondition):
    pass


class GridMismatch(NumericPrecondition):
    pass


class ContainmentViolation(NumericPrecondition):
    pass


class StepTooLarge(NumericPrecondition):
    pass


class DivergentLineIntegral(NumericPrecondition):
    pass


class PhaseWrapRisk(NumericPrecondition):
    pass


class MaskEmpty(NumericPrecondition):
    pass


class DegenerateFit(NumericPrecondition):
    pass


class InsufficientCoverage(NumericPrecondition):
    pass


class FieldFormatError(HescError):
    exit_code = 5
