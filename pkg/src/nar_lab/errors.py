"""Exception taxonomy shared across the package.

Callers can catch ``NarLabError`` to handle any library failure, or the
specific subclass when they want to distinguish bad arguments from bad
data or exhausted samplers.
"""

from __future__ import annotations


class NarLabError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(NarLabError, ValueError):
    """A function was called with arguments outside its documented domain."""


class GenerationError(NarLabError, RuntimeError):
    """A rejection sampler exceeded its retry cap."""


class InputError(NarLabError, ValueError):
    """A task input violates the task's preconditions (e.g. a cycle fed to a DAG task)."""


class ShapeError(NarLabError, ValueError):
    """Tensor operands have incompatible shapes."""


class ParseError(NarLabError, ValueError):
    """A shard or config file failed to parse.

    Carries the offending path and 1-based line number so the message
    pinpoints the bad record.
    """

    def __init__(self, path: str, line: int, reason: str):
        self.path = str(path)
        self.line = int(line)
        self.reason = reason
        super().__init__(f"{self.path}:{self.line}: {reason}")


class ConfigError(NarLabError, ValueError):
    """Configs disagree (e.g. interpolating checkpoints with different hashes)."""
