"""Exception types shared across the package.

The CLI maps these onto process exit codes, so user-facing entry points
should raise the most specific class that applies.
"""


class HnclError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(HnclError, ValueError):
    """Array extents do not match what an operation requires."""


class DegenerateEmbeddingError(HnclError, ValueError):
    """A vector whose norm is too small to normalize safely."""

    def __init__(self, row: int, norm: float):
        self.row = row
        self.norm = norm
        super().__init__(f"row {row} has near-zero norm {norm:.3e}; cannot normalize")


class EmptyBatchError(HnclError, ValueError):
    """A loss was asked to score zero pairs."""


class InsufficientNegativesError(HnclError, ValueError):
    """A batch too small to provide at least one negative per anchor."""


class EmptySupportError(HnclError, ValueError):
    """A sampler was given no eligible candidates."""


class StratificationError(HnclError, ValueError):
    """Per-class subsampling is impossible (a class is absent)."""


class OracleError(HnclError, RuntimeError):
    """A finite-difference probe hit a non-finite function value."""


class ConfigError(HnclError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class DataError(HnclError):
    """A dataset on disk cannot be read as specified (CLI exit code 3)."""


class SchemaError(DataError):
    """Dataset metadata is malformed or inconsistent with the payload."""


class TruncationError(DataError):
    """A binary payload is shorter than its declared shape requires."""


class ChecksumError(DataError):
    """A payload's content does not match its recorded checksum."""
