"""Exception types shared across the pipeline.

Each class carries the process exit code the CLI uses for its category.
"""

from __future__ import annotations


class PipelineError(Exception):
    exit_code = 5


class ParseError(PipelineError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    exit_code = 3

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(PipelineError, ValueError):
    exit_code = 4


class ConfigError(ValidationError):
    pass


class SchemaMismatchError(ValidationError):
    pass


class HookError(PipelineError):
    """A text-transform hook failed on one record."""

    def __init__(self, index: int, cause: BaseException):
        self.index = index
        self.cause = cause
        super().__init__(f"transform hook failed on record {index}: {cause!r}")
