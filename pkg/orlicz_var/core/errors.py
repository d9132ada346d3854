# orlicz_var/core/errors.py
from typing import Optional


class OrliczError(Exception):
    """Base class for all library errors"""
    exit_code = 2


class NumericalError(OrliczError):
    exit_code = 2


class BracketFailure(NumericalError):
    """Stationary point or level set not bracketed below the cap"""


class DivergenceSuspected(NumericalError):
    """Excess still grows across the last decades of t"""


class QuadratureDivergence(NumericalError):
    """Graded refinement did not converge"""


class NonFiniteModular(NumericalError):
    pass


class NonFiniteEnergy(NumericalError):
    pass


class LineSearchFailure(NumericalError):
    pass


class ExpressionDomainError(NumericalError):
    """Division by zero, log of a nonpositive number or a fractional power of a negative base"""


class ValidationFailure(OrliczError):
    """A hard problem condition failed on the sample cloud"""
    exit_code = 1


class ConfigError(OrliczError):
    exit_code = 1

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(self._format())

    def _format(self) -> str:
        if self.line is None:
            return self.message
        if self.column is None:
            return f"line {self.line}: {self.message}"
        return f"line {self.line}, column {self.column}: {self.message}"


class ConfigSyntaxError(ConfigError):
    pass


class ConfigSemanticError(ConfigError):
    pass
