"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class KernelScientistError(Exception):
    """Base class for all errors raised by this package."""


class UnknownIdError(KernelScientistError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class UnknownParentError(UnknownIdError):
    pass


class EmptyPopulationError(KernelScientistError):
    pass


class NoEvaluatedRecordsError(KernelScientistError):
    pass


class StorageError(KernelScientistError):
    pass


class DuplicateIdError(KernelScientistError):
    pass


class ConfigError(KernelScientistError):
    pass


class ParseError(KernelScientistError, ValueError):
    """Raised by stage parsers; the message is fed back to the LLM on repair."""


class ParseExhaustedError(KernelScientistError):
    def __init__(self, role: str, attempts: int, last_error: str):
        super().__init__(f"{role}: no parseable output after {attempts} attempt(s): {last_error}")
        self.role = role
        self.attempts = attempts
        self.last_error = last_error


class TransportError(KernelScientistError):
    """A backend request failed (network, HTTP status, malformed envelope)."""


class RoleUnconfiguredError(KernelScientistError):
    pass
