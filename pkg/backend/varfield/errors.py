from __future__ import annotations

from typing import Any, Optional


class VarfieldError(Exception):
    """Base class for every error raised by the engine."""


class ModelParseError(VarfieldError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        if self.column is None:
            return f"line {self.line}: {self.message}"
        return f"line {self.line}, column {self.column}: {self.message}"


class UnknownNameError(VarfieldError):
    def __init__(self, kind: str, name: str):
        self.kind = kind
        self.name = name
        super().__init__(f"unknown {kind} '{name}'")


class DerivationError(VarfieldError):
    """Invalid input to a symbolic operator."""


class SymbolError(DerivationError):
    pass


class NotExtremalError(DerivationError):
    def __init__(self, message: str, residual: Any = None):
        self.residual = residual
        super().__init__(message)


class DerivationCancelled(DerivationError):
    pass


class EvaluationError(VarfieldError):
    def __init__(self, message: str, atom: Optional[str] = None):
        self.atom = atom
        super().__init__(message)
