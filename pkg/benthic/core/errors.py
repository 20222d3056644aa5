from typing import Optional, Tuple


class BenthicError(Exception):
    """Base class for toolkit errors."""


class DomainError(BenthicError, ValueError):
    """An argument lies outside the domain of an operation."""


class PreconditionError(DomainError):
    """Inputs are valid individually but violate an operation's precondition."""


class DegenerateFitError(DomainError):
    """Not enough usable points to fit a model."""


class DatasetParseError(DomainError):
    """A decay dataset could not be parsed.

    `row` is the 1-based data row (header excluded) and `column` the header
    name, when the problem can be pinned to a cell.
    """

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(BenthicError, ArithmeticError):
    """A numerical routine did not converge."""

    def __init__(self, message: str, bracket: Optional[Tuple[float, float]] = None):
        self.bracket = bracket
        if bracket is not None:
            message = f"{message} (bracket [{bracket[0]:.6g}, {bracket[1]:.6g}])"
        super().__init__(message)
