"""Source spans, diagnostics, and the one-line diagnostic text format."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


@dataclass(frozen=True, order=True)
class SourceSpan:
    file: str = "<input>"
    line: int = 1
    column: int = 1
    end_line: int = 1
    end_column: int = 1

    def __post_init__(self) -> None:
        if (self.end_line, self.end_column) < (self.line, self.column):
            raise ValueError(f"span ends before it starts: {self}")

    def to(self, other: SourceSpan) -> SourceSpan:
        """Span covering from the start of ``self`` to the end of ``other``."""
        return SourceSpan(self.file, self.line, self.column, other.end_line, other.end_column)

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


NO_SPAN = SourceSpan()

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str
    message: str
    span: SourceSpan = NO_SPAN
    related: tuple[SourceSpan, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.severity not in (ERROR, WARNING):
            raise ValueError(f"unknown severity {self.severity!r}")
        if not self.code:
            raise ValueError("diagnostic code must be non-empty")

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR

    def sort_key(self) -> tuple:
        s = self.span
        return (s.file, s.line, s.column, self.code, self.message)

    def format(self) -> str:
        s = self.span
        return f"{s.file}:{s.line}:{s.column}: {self.severity}[{self.code}]: {self.message}"


def error(code: str, message: str, span: SourceSpan = NO_SPAN, related=()) -> Diagnostic:
    return Diagnostic(code, ERROR, message, span, tuple(related))


def warning(code: str, message: str, span: SourceSpan = NO_SPAN) -> Diagnostic:
    return Diagnostic(code, WARNING, message, span)


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=Diagnostic.sort_key)


def format_diagnostics(diags: Iterable[Diagnostic]) -> str:
    """Render diagnostics one per line as ``file:line:col: severity[code]: message``.

    Lines are ordered by file, line, column, then code. An empty input gives
    an empty string.
    """
    lines = [d.format() for d in sort_diagnostics(diags)]
    return "".join(line + "\n" for line in lines)


class DiagnosticError(Exception):
    """Raised when a front-end stage cannot produce its output."""

    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = sort_diagnostics(diagnostics)
        super().__init__(format_diagnostics(self.diagnostics).rstrip("\n"))

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]
