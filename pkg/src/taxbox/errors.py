"""Exception types shared across the package.

Exit-code mapping used by the CLI: argument errors exit 2 (click's own
usage errors already do), DataError exits 3, NumericError exits 4.
"""


class TaxboxError(Exception):
    exit_code = 1


class DataError(TaxboxError):
    """Malformed or inconsistent input data (files, labels, caches)."""

    exit_code = 3


class NumericError(TaxboxError):
    """Non-finite values encountered where finiteness is required."""

    exit_code = 4
