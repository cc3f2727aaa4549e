"""Error and diagnostic types shared across the toolkit.

Hard failures are exceptions; recoverable findings (unreachable code,
possibly-uninitialized variables, cardinality-bound caveats) are collected
as Diagnostic values and surfaced in reports without aborting.
"""

from __future__ import annotations

from dataclasses import dataclass


class FlowoptError(Exception):
    """Base class for all toolkit errors."""


class UdfSyntaxError(FlowoptError):
    """Malformed UDF text. Carries the 1-based source line and column."""

    def __init__(self, message: str, line: int, col: int | None = None):
        self.line = line
        self.col = col
        where = f"line {line}" if col is None else f"line {line}, col {col}"
        super().__init__(f"{where}: {message}")


class UdfValidationError(FlowoptError):
    """Structurally parsable UDF that violates an IR invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class AnalysisError(FlowoptError):
    """Property extraction failed, e.g. an emitted record is never created."""


class PlanError(FlowoptError):
    """Invalid plan structure, schema violation, or bad rewrite request."""


class ExecError(FlowoptError):
    """Runtime failure in the reference executor.

    ``line`` is the UDF statement that failed; ``context`` names the
    operator and input records when the failure happened inside a plan run.
    """

    def __init__(self, message: str, line: int | None = None, context: str | None = None):
        self.line = line
        self.context = context
        parts = []
        if context:
            parts.append(context)
        if line is not None:
            parts.append(f"line {line}")
        prefix = " at ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class Diagnostic:
    """A non-fatal finding attached to an analysis or plan result."""

    message: str
    line: int | None = None

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"
