"""Exception types shared across the engine."""


class ParseError(ValueError):
    """Malformed input file; message carries the offending row number."""


class ValidationError(ValueError):
    """Data or configuration violates a documented invariant."""


class InsufficientHistoryError(ValueError):
    """An operation was asked for a window that reaches before the data starts."""


class NumericalError(ArithmeticError):
    """A linear-algebra step degenerated (singular matrix, non-finite result)."""


class BankruptcyError(ArithmeticError):
    """Transaction cost met or exceeded gross return; log reward is undefined."""


class DivergenceError(ArithmeticError):
    """Training produced NaN loss or gradients."""


class PipelineOrderError(RuntimeError):
    """A pipeline stage ran before the stage that produces its inputs."""
