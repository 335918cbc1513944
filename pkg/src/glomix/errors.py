"""Exception types shared across glomix."""


class GlomixError(Exception):
    pass


class DomainError(GlomixError, ValueError):
    """Argument outside the domain of a map, branch or conjugation."""


class MapSpecError(GlomixError, ValueError):
    """A map or branch specification violates its structural invariants."""


class EndpointMismatch(MapSpecError):
    """Branch endpoints are inconsistent with the branch formulas."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ConvergenceError(GlomixError, RuntimeError):
    pass


class NonIntegrable(GlomixError, ArithmeticError):
    """Adaptive quadrature could not meet its tolerance within budget."""

    def __init__(self, message, partial=None, error=None):
        super().__init__(message)
        self.partial = partial
        self.error = error


class SingularMass(GlomixError, ArithmeticError):
    """An operation needed a finite mass but received an infinite one."""


class SamplingError(GlomixError, RuntimeError):
    pass


class ConfigError(GlomixError, ValueError):
    pass
