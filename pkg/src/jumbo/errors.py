"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Bad input: wrong shape, non-finite values, out-of-range parameters."""


class NumericalFailure(ArithmeticError):
    """A factorisation or optimisation could not produce a finite result."""


class BudgetExhausted(RuntimeError):
    """Every candidate of a finite domain has already been queried."""


class ParseError(ValueError):
    """Malformed benchmark, trace or config file.

    Parameters
    ----------
    message : str
        Human-readable reason.
    line : int, optional
        1-based line number in the offending file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
