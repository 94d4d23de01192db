from __future__ import annotations

from dataclasses import dataclass

from .syntax import Span

# error codes
LEXICAL = "E001"
SYNTAX = "E002"
DUPLICATE = "E003"
UNBOUND = "E004"
ROLE_MISMATCH = "E101"
UNKNOWN_LABEL = "E102"
PAYLOAD_MISMATCH = "E103"
NOT_CONSUMED = "E104"
KNOWLEDGE_OF_CHOICE = "E105"
UNBOUND_NAME = "E106"
GUARD_NOT_BOOL = "E107"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    span: Span

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def sort_key(self) -> tuple:
        return (self.span.file, self.span.line, self.span.col, self.code)

    def render(self, color: bool = False) -> str:
        head = f"{self.severity}[{self.code}]"
        if color:
            tint = "\x1b[1;31m" if self.is_error else "\x1b[1;33m"
            head = f"{tint}{head}\x1b[0m"
        return f"{self.span}: {head}: {self.message}"


def error(code: str, message: str, span: Span) -> Diagnostic:
    return Diagnostic("error", code, message, span)


class DiagnosticError(Exception):
    """Raised by the library entry points when a stage produced errors."""

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = diagnostics
        super().__init__("\n".join(d.render() for d in diagnostics))
