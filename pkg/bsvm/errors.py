from __future__ import annotations

from typing import Any, Dict, Optional


class BsvmError(Exception):
    """Base class for every error raised by the library."""


class ConfigurationError(BsvmError, ValueError):
    pass


class IngestionError(BsvmError, ValueError):
    def __init__(self, message: str, *, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(BsvmError, ValueError):
    pass


class NumericalError(BsvmError, ArithmeticError):
    def __init__(
        self,
        message: str,
        *,
        index: Optional[int] = None,
        epoch: Optional[int] = None,
        snapshot: Optional[Dict[str, Any]] = None,
    ) -> None:
        self.index = index
        self.epoch = epoch
        self.snapshot = snapshot or {}
        super().__init__(message)


class SingularKernelError(NumericalError):
    def __init__(self, message: str, *, duplicates: Optional[list[tuple[int, int]]] = None) -> None:
        self.duplicates = list(duplicates or [])
        super().__init__(message)


class TrainingAborted(NumericalError):
    pass
