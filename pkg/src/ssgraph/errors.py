"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
NumericError -> 3, MemoryLimitError -> 4. Everything else is a bug.
"""


class SsgraphError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SsgraphError):
    """Invalid configuration or inconsistent method blocks."""


class DataFormatError(SsgraphError):
    """Malformed input file (carries file context and line number when known)."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ShapeError(SsgraphError):
    """Tensor or array shape mismatch."""


class StructureError(SsgraphError):
    """Parameter-set name/shape mismatch (e.g. during moving-average updates)."""


class NumericError(SsgraphError):
    """Non-finite value encountered where finiteness is required."""


class MemoryLimitError(SsgraphError):
    """Refused to run a configuration whose activation footprint exceeds the guard."""
