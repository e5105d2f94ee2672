"""Exception hierarchy shared by all gridsense modules."""


class GridsenseError(Exception):
    """Base class for every error raised by this package."""


class CaseFormatError(GridsenseError):
    """Malformed case or series file; carries the offending line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NotFoundError(GridsenseError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DegenerateBranchError(GridsenseError):
    pass


class SingularLoadError(GridsenseError):
    pass


class ReductionSingularError(GridsenseError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class NonSymmetricAdmittanceError(GridsenseError):
    pass


class ConvergenceError(GridsenseError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class StabilityError(GridsenseError):
    """State matrix is not Hurwitz; the stationary covariance does not exist."""


class InstabilityError(GridsenseError):
    """A simulated trajectory left the neighbourhood of its equilibrium."""

    def __init__(self, message, segment=None):
        self.segment = segment
        super().__init__(message)


class RateError(GridsenseError):
    pass


class SampleSizeError(GridsenseError):
    pass


class IllConditionedWindowError(GridsenseError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class DegenerateCovarianceError(GridsenseError):
    pass


class ZeroReferenceError(GridsenseError):
    pass


class NumericalError(GridsenseError):
    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class ConfigError(GridsenseError):
    pass
