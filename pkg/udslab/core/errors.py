"""Exception types shared by the numerical modules and the command line."""

from __future__ import annotations

from typing import Mapping, Optional


class UdsLabError(Exception):
    """Base class for all errors raised deliberately by uds-lab."""


class ConfigError(UdsLabError, ValueError):
    """Invalid experiment configuration (exit code 2)."""

    def __init__(self, message: str, *, field: str = "", line: Optional[int] = None) -> None:
        self.field = field
        self.line = line
        location = ""
        if line is not None:
            location += f"Zeile {line}"
        if field:
            location += (", " if location else "") + f"Feld '{field}'"
        super().__init__(f"{location}: {message}" if location else message)


class TraceFileError(UdsLabError, ValueError):
    """Trace or result file that cannot be read or written (exit code 2)."""


class NumericalAbortError(UdsLabError, FloatingPointError):
    """A run produced non-finite numbers and was stopped (exit code 3)."""

    def __init__(
        self,
        message: str,
        *,
        step: Optional[int] = None,
        context: Optional[Mapping[str, object]] = None,
    ) -> None:
        self.step = step
        self.context = dict(context or {})
        prefix = f"Schritt {step}: " if step is not None else ""
        super().__init__(prefix + message)


class DivergenceError(NumericalAbortError):
    """Denoiser training loss exploded beyond the allowed factor."""


__all__ = ["ConfigError", "DivergenceError", "NumericalAbortError", "TraceFileError", "UdsLabError"]
