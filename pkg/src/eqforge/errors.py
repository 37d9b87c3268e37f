"""Exception hierarchy.

Numeric failures map to CLI exit code 3, configuration failures to exit code 2.
"""


class EqforgeError(Exception):
    pass


class NumericError(EqforgeError):
    pass


class IntegratorDivergence(NumericError):
    pass


class DegenerateCocycle(NumericError):
    pass


class SeedFailure(NumericError):
    pass


class RefinementBlowup(NumericError):
    pass


class NonFiniteWeight(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class ConfigError(EqforgeError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ConfigError):
    pass


class RangeError(ConfigError, ValueError):
    pass
