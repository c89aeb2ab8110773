"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates an operation's contract (bad shape,
    non-binary labels, out-of-range hyperparameter, malformed file)."""


class ConfigError(ValueError):
    """Raised for inconsistent configuration (unknown keys, missing
    required pieces such as class frequencies for the inverse-frequency
    loss, unknown sweep axis)."""


class TrainingDivergedError(RuntimeError):
    """Raised when training produces a non-finite loss.

    Carries a ``diagnostics`` dict (epoch, step, loss value, parameter
    norms) so the failing state can be inspected.
    """

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics
