"""Exception types shared across the toolkit."""


class EarError(Exception):
    """Base class for user-facing errors (CLI maps these to exit code 1)."""


class InvalidArgumentError(EarError, ValueError):
    pass


class DegenerateInputError(EarError, ValueError):
    pass


class InvalidStateError(EarError, RuntimeError):
    pass


class FormatError(EarError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{message} (field: {field})" if field else message)
        self.field = field


class NotFoundError(EarError, LookupError):
    pass


class ConfigurationError(EarError, ValueError):
    pass


class IncompatibleCheckpointError(EarError, ValueError):
    pass


class NonFiniteLossError(EarError, FloatingPointError):
    def __init__(self, step: int, breakdown: dict | None = None):
        super().__init__(f"non-finite loss at step {step}: {breakdown}")
        self.step = step
        self.breakdown = breakdown
