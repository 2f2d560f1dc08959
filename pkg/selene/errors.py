"""Error types for Selene.

Every error carries a message and knows how to format itself for the
command line.  Errors that can end a CLI invocation also carry the exit
code the front end should return.
"""

from __future__ import annotations

from typing import Optional

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_INTERRUPTED = 3
EXIT_CHECKPOINT = 4
EXIT_CATALOG = 5


class SeleneError(Exception):
    """Base class for all Selene errors."""

    kind = "Error"
    exit_code = EXIT_INTERNAL

    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(self.format())

    def format(self) -> str:
        return f"{self.kind}: {self.message}"


class InvalidInputError(SeleneError):
    """Raised for out-of-domain numeric input (negative lengths, NaN, ...)."""

    kind = "InvalidInput"


class ConfigError(SeleneError):
    """Raised for malformed or internally inconsistent run configuration."""

    kind = "ConfigError"
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        self.key = key
        super().__init__(message)

    def format(self) -> str:
        if self.key:
            return f"{self.kind} [{self.key}]: {self.message}"
        return f"{self.kind}: {self.message}"


class CheckpointError(SeleneError):
    """Raised when a checkpoint cannot be read or does not match the run."""

    kind = "CheckpointError"
    exit_code = EXIT_CHECKPOINT


class CatalogError(SeleneError):
    """Raised for missing catalogs and records that fail their invariants."""

    kind = "CatalogError"
    exit_code = EXIT_CATALOG


class SweepInterrupted(SeleneError):
    """Raised after an interrupted sweep has flushed its checkpoint."""

    kind = "Interrupted"
    exit_code = EXIT_INTERRUPTED

    def __init__(self, message: str, next_index: int) -> None:
        self.next_index = next_index
        super().__init__(message)


class IntegrationError(SeleneError):
    """Raised when the integrator cannot continue (step-size underflow)."""

    kind = "IntegrationError"

    def __init__(self, message: str, time: float) -> None:
        self.time = time
        super().__init__(message)

    def format(self) -> str:
        return f"{self.kind} [t={self.time:.12g} TU]: {self.message}"


class CollisionError(SeleneError):
    """Signals that an arc hit a primary; consumed by the corrector."""

    kind = "Collision"

    def __init__(self, body: str, time: float) -> None:
        self.body = body
        self.time = time
        super().__init__(f"trajectory reached the {body} surface")

    def format(self) -> str:
        return f"{self.kind} [t={self.time:.12g} TU]: {self.message}"


class InsufficientDataError(SeleneError):
    """Raised by analysis routines that have nothing to work on."""

    kind = "InsufficientData"
