"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch that.
"""


class CorrAttackError(ValueError):
    """Base class for every error raised by corrattack."""


class FormatError(CorrAttackError):
    pass


class ParseError(CorrAttackError):
    pass


class EmptyInputError(CorrAttackError):
    pass


class DegenerateSeriesError(CorrAttackError):
    """Raised for constant (zero-variance) series where a scale is needed."""


class DegenerateInputError(CorrAttackError):
    pass


class ShapeError(CorrAttackError):
    pass


class DomainError(CorrAttackError):
    pass


class ConfigError(CorrAttackError):
    pass


class SingularFitError(CorrAttackError):
    pass


class TrainingDivergedError(CorrAttackError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class NoEligibleSamplesError(CorrAttackError):
    pass


class DegenerateNormalizationError(CorrAttackError):
    pass


class PairingError(CorrAttackError):
    pass
