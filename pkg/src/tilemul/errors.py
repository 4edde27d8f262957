"""Exception types shared across the package.

Overflow of the binary16 range is reported with the builtin ``OverflowError``
and I/O failures with ``OSError``.
"""


class TilemulError(Exception):
    pass


class ParseError(TilemulError, ValueError):
    """Malformed Matrix Market input."""


class UnsupportedError(TilemulError):
    """Valid Matrix Market input that this package does not handle."""


class FormatError(TilemulError, ValueError):
    """Bad magic, version or truncated tiled binary file."""


class InvariantError(TilemulError, ValueError):
    """A TiledMatrix violates its structural invariants."""


class DimensionError(TilemulError, ValueError):
    pass


class PrecisionError(TilemulError, ArithmeticError):
    """An fp32 accumulator became non-finite."""
