"""Typed errors shared across the package."""


class GplLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GplLabError, ValueError):
    """Feature/embedding dimensions of two operands disagree."""


class IndexRangeError(GplLabError, IndexError):
    """A node index (anchor, center, endpoint) is out of range."""


class GraphFormatError(GplLabError, ValueError):
    """A graph/dataset file failed to parse; message carries the line number."""


class DivergenceError(GplLabError, RuntimeError):
    """Training produced a non-finite loss or gradient."""


class ConfigError(GplLabError, ValueError):
    """A run configuration is malformed or inconsistent."""
