"""Exception hierarchy shared by all modules."""


class ChoiceLabError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ChoiceLabError, ValueError):
    """Arguments violate an operation's preconditions."""


class InvalidConfigError(ChoiceLabError, ValueError):
    """A scenario or experiment configuration is not admissible."""


class NumericError(ChoiceLabError, ArithmeticError):
    """Non-finite utilities, attributes or probabilities."""


class DatasetParseError(ChoiceLabError, ValueError):
    """A dataset file is malformed. Carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EstimationError(ChoiceLabError):
    """Base class for failures of the pseudo-likelihood estimator."""


class NoIdentificationError(EstimationError):
    """Every observation has a singleton set; the likelihood is constant."""


class SeparationError(EstimationError):
    """The likelihood has no finite maximiser (complete or quasi-complete separation)."""


class RankDeficiencyError(EstimationError):
    """The Hessian at the estimate is singular."""
