"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, DataError 2,
NumericsError 3.
"""


class DataError(Exception):
    """Invalid or inconsistent input data (bad rows, span bounds, schema)."""


class AlignmentError(DataError):
    """Two structures that must share an owner or length do not."""


class NumericsError(Exception):
    """Non-finite values or a failed numerical verification."""
