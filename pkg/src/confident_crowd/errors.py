"""Exception types raised across the package."""


class ConfidentCrowdError(ValueError):
    """Base class for all domain errors."""


class EmptyInput(ConfidentCrowdError):
    pass


class NonPositiveEstimate(ConfidentCrowdError):
    pass


class DegenerateScale(ConfidentCrowdError):
    pass


class ZeroVariance(ConfidentCrowdError):
    pass


class InsufficientData(ConfidentCrowdError):
    pass


class InsufficientBins(ConfidentCrowdError):
    pass


class WeightOutOfRange(ConfidentCrowdError):
    pass


class NoSignalInControl(ConfidentCrowdError):
    pass


class NoFeasibleOmega(ConfidentCrowdError):
    pass


class DatasetError(ConfidentCrowdError):
    """A validation failure while loading a CSV file.

    ``rule`` is the name of the violated rule (``DuplicateKey``,
    ``NonPositiveEstimate``, ...) so callers can branch on it.
    """

    def __init__(self, path, line, rule, message):
        self.path = str(path)
        self.line = line
        self.rule = rule
        self.message = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {rule}: {message}")
