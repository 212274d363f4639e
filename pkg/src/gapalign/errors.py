"""Exception types shared across the package.

The CLI maps these onto exit codes: input/format problems exit 2,
infeasible alignments exit 3, external tool failures exit 4.
"""


class GapalignError(Exception):
    """Base class for all errors raised by this package."""


class InventoryError(GapalignError):
    """Malformed or inconsistent phoneme inventory document."""


class UnknownSymbolError(GapalignError):
    """An IPA symbol could not be mapped to any inventory phoneme.

    ``position`` is 1-based (the n-th symbol of the input list).
    """

    def __init__(self, symbol: str, position: int):
        self.symbol = symbol
        self.position = position
        super().__init__(f"unknown IPA symbol {symbol!r} at position {position}")


class FormatError(GapalignError):
    """Corrupt or invalid serialized input (PGRAM, JSON documents, TextGrid)."""


class InfeasibleAlignmentError(GapalignError):
    """No legal frame-to-state assignment exists for the given instance."""


class ExternalToolError(GapalignError):
    """An external process (the G2P frontend) is missing or failed."""
