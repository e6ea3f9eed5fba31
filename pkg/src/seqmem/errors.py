class SeqMemError(Exception):
    """Base class for all harness errors."""


class ValidationError(SeqMemError, ValueError):
    """Input data or arguments violate a documented precondition."""


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigurationError(SeqMemError):
    """Run configuration is missing or invalid."""


class GatewayError(SeqMemError):
    """Model endpoint failed; `retryable` marks transport-level failures."""

    def __init__(self, message: str, retryable: bool = True):
        self.retryable = retryable
        super().__init__(message)


class InvariantViolation(SeqMemError):
    """An internal consistency check failed. Always fatal."""


class EmptyHorizonError(ValidationError):
    """No admissible (task, checkpoint) pairs exist for the requested horizon."""


class RunAborted(SeqMemError):
    """Online loop stopped early; state up to `last_step` is persisted."""

    def __init__(self, message: str, last_step: int, resume_token: str | None = None):
        self.last_step = last_step
        self.resume_token = resume_token
        super().__init__(message)
