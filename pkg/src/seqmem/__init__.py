"""Sequential memory evaluation harness."""

from seqmem.errors import (
    ConfigurationError,
    GatewayError,
    InvariantViolation,
    SeqMemError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "GatewayError",
    "InvariantViolation",
    "SeqMemError",
    "ValidationError",
    "__version__",
]
