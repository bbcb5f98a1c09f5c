"""Exception hierarchy shared by every module of the package."""


class RescompError(Exception):
    """Base class for all errors raised by :mod:`rescomp`."""


class DimensionMismatch(RescompError, ValueError):
    pass


class IterationLimit(RescompError):
    pass


class Singular(RescompError):
    pass


class NotSymmetric(RescompError, ValueError):
    pass


class NotPSD(RescompError, ValueError):
    pass


class InvalidGamma(RescompError, ValueError):
    pass


class ReparamDivergence(RescompError):
    pass


class NotCoisometry(RescompError, ValueError):
    pass


class NoClosedForm(RescompError):
    """The node has no exact resolvent for the requested structure."""


class AllPairsDegenerate(RescompError):
    pass


class OracleAmbiguous(RescompError):
    pass


class OracleFailure(RescompError):
    """Grid search did not reach a graph point within tolerance."""


class KernelViolation(RescompError, ValueError):
    pass


class BoundUnavailable(RescompError):
    pass


class ParseError(RescompError, ValueError):
    pass


class ConfigInvalid(RescompError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class ExperimentFailed(RescompError):
    pass
