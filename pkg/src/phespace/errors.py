"""Exception taxonomy shared by all modules."""


class PhespaceError(Exception):
    """Base class for all errors raised by this package."""


class SingularPoint(PhespaceError):
    """Evaluation hit a singular locus (x ~ 0, branch cut, vanishing divisor)."""


class BadParams(PhespaceError):
    """Parameter set violates an existence condition of the requested family."""


class BadGauge(PhespaceError):
    """Gauge data violates the compatibility constraint between its functions."""


class NotTwistFree(PhespaceError):
    """Operation requires a potential linear in x."""


class UnsupportedFamily(PhespaceError):
    """Requested quantity is not defined for this family."""


class CertificateFailed(PhespaceError):
    """Recovered structure constants do not match the target commutation table."""


class ParseError(PhespaceError):
    """Expression text could not be parsed; carries the offending offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class ConfigError(PhespaceError):
    """Campaign configuration is invalid."""


class PoleInRange(PhespaceError):
    """Quadrature interval contains a root of the separable cubic."""


class SingularityReached(PhespaceError):
    """ODE solution left the trust region (pole of the flow)."""


class DomainExit(PhespaceError):
    """Requested evaluation point lies outside the problem's domain interval."""
