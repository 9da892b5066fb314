class InputError(ValueError):
    """Bad input files, unknown ids or levels, violated preconditions."""


class DomainError(ValueError):
    """A parameter lies outside the mathematical domain of an operation."""


class EvaluationError(ArithmeticError):
    """A likelihood or log-posterior evaluated to NaN or infinity."""
