"""
exceptions.py - error types raised by the quilting package.

The CLI maps these to exit codes (2 validation, 3 numerical, 4 I/O).
"""

from typing import Optional, Sequence


class QuiltError(Exception):
    """Base class for all graph quilting errors."""


class DesignValidationError(QuiltError, ValueError):
    """A block design is structurally invalid."""


class CorrelationInputError(QuiltError, ValueError):
    """A correlation or precision input breaks its invariants."""


class DegenerateColumnError(QuiltError, ValueError):
    """One or more data columns are constant within a block."""

    def __init__(self, message: str, columns: Sequence[int]):
        super().__init__(message)
        self.columns = tuple(int(c) for c in columns)


class ConvergenceError(QuiltError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, duality_gap: float, sweeps: int):
        super().__init__(message)
        self.duality_gap = float(duality_gap)
        self.sweeps = int(sweeps)


class MergeUnderdeterminedError(QuiltError, ValueError):
    """A block overlaps prior coverage in fewer variables than the rank."""

    def __init__(self, message: str, block: int, overlap: int, rank: int):
        super().__init__(message)
        self.block = int(block)
        self.overlap = int(overlap)
        self.rank = int(rank)


class ConfigError(QuiltError, ValueError):
    """A run configuration is malformed."""

    def __init__(self, message: str, keys: Optional[Sequence[str]] = None):
        super().__init__(message)
        self.keys = tuple(keys or ())


class SweepFailureError(QuiltError, RuntimeError):
    """Too many benchmark replicates failed."""

    def __init__(self, message: str, failed: int, total: int):
        super().__init__(message)
        self.failed = int(failed)
        self.total = int(total)
