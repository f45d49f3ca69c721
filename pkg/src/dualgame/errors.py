"""Exception types shared across the package."""

from __future__ import annotations


class DualGameError(Exception):
    """Base class for all package errors."""


class ResourceCapError(DualGameError):
    """An enumeration or grid would exceed a configured budget."""

    def __init__(self, what: str, count: int, cap: int):
        self.what = what
        self.count = count
        self.cap = cap
        super().__init__(
            f"{what}: {count} exceeds cap {cap} "
            "(reduce the horizon or grid resolution, or raise the cap)"
        )


class InvariantError(DualGameError, ValueError):
    """An input violates a documented invariant."""


class DegenerateError(DualGameError, ValueError):
    """A conditional probability was requested on a null event."""


class LPError(DualGameError, RuntimeError):
    """A linear program was infeasible or unbounded."""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(f"linear program {status}" + (f": {message}" if message else ""))


class ParseError(DualGameError):
    """Malformed game file, with a line/column diagnosis."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", col {col}" if col is not None else "") + ": "
        super().__init__(loc + message)
