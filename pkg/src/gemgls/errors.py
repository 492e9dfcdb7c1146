"""Exception types shared across the package.

Every error carries an optional ``step`` tag so pipeline failures can be
attributed to the algorithm step that raised them.
"""
from __future__ import annotations


class GemglsError(Exception):
    """Base class. ``step`` is filled in by the pipeline when re-raising."""

    kind = "error"

    def __init__(self, message: str, *, step: str | None = None):
        super().__init__(message)
        self.step = step

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.step}] {msg}" if self.step else msg

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": super().__str__(), "step": self.step}


class InvalidParameterError(GemglsError, ValueError):
    kind = "invalid-parameter"


class PreconditionError(GemglsError, ValueError):
    kind = "precondition-violation"


class SingularInputError(GemglsError, ArithmeticError):
    kind = "singular-input"


class SingularDesignError(GemglsError, ArithmeticError):
    kind = "singular-design"


class DegenerateVarianceError(GemglsError, ArithmeticError):
    kind = "degenerate-variance"

    def __init__(self, message: str, index=None, *, step: str | None = None):
        super().__init__(message, step=step)
        self.index = index

    def to_dict(self) -> dict:
        d = super().to_dict()
        if self.index is not None:
            d["index"] = [int(i) for i in self.index] if hasattr(self.index, "__len__") else int(self.index)
        return d


class ConvergenceError(GemglsError, RuntimeError):
    kind = "convergence-failure"

    def __init__(self, message: str, kkt_residual: float, iterations: int, *, step: str | None = None):
        super().__init__(message, step=step)
        self.kkt_residual = kkt_residual
        self.iterations = iterations


class UndefinedROCError(GemglsError, ValueError):
    kind = "undefined-roc"


class TooFewValuesError(GemglsError, ValueError):
    kind = "too-few-values"


class ParseError(GemglsError, ValueError):
    kind = "parse-error"

    def __init__(self, message: str, line: int | None = None, *, step: str | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, step=step)
        self.line = line


def attribute(err: GemglsError, step: str) -> GemglsError:
    """Tag ``err`` with ``step`` unless a more specific step is already set."""
    if err.step is None:
        err.step = step
    return err
