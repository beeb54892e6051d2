"""Exception types shared across the package."""


class NotPositiveDefiniteError(Exception):
    """A marginal visible precision matrix lost positive definiteness.

    Carries the binary configuration that produced it, so enumeration
    failures can be reported precisely.
    """

    def __init__(self, message, config=None):
        super().__init__(message)
        self.config = config


class EnumBudgetError(ValueError):
    """Requested enumeration exceeds the configured binary-variable budget."""


class CorruptFileError(Exception):
    """A serialized artifact failed its magic/CRC/structure checks."""


class MeanFieldError(RuntimeError):
    """Mean-field inference produced a non-finite intermediate."""

    def __init__(self, message, sweep=None):
        super().__init__(message)
        self.sweep = sweep


class TrainingError(RuntimeError):
    """A parameter update could not be applied (e.g. non-finite gradient)."""
