"""Structured error reporting: every failed judgement names the rule that
failed, where, and the stack of judgements that led there."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    span: Optional[Span] = None
    trail: tuple[str, ...] = ()

    def __str__(self) -> str:
        loc = f" at {self.span}" if self.span else ""
        out = f"[{self.rule}]{loc} {self.message}"
        for step in self.trail:
            out += f"\n  while {step}"
        return out

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "message": self.message,
            "span": None if self.span is None else [self.span.line, self.span.col],
            "trail": list(self.trail),
        }


class MpstError(Exception):
    """Base for all toolkit errors carrying a diagnostic."""

    def __init__(self, diag: Diagnostic):
        super().__init__(str(diag))
        self.diag = diag


class KindError(MpstError):
    pass


class CheckError(MpstError):
    pass


class MergeFailure(MpstError):
    pass


class NegativeResult(MpstError):
    pass


class FuelExhausted(MpstError):
    pass


class UndecidedError(MpstError):
    """A semantic judgement could not be decided; soundness over completeness."""


class ParameterOutOfRange(MpstError):
    pass


def diag(rule: str, message: str, trail: tuple[str, ...] = ()) -> Diagnostic:
    return Diagnostic(rule, message, None, trail)
