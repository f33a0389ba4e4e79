"""Verification engine for para-Hermite Einstein metrics on the real neutral slice."""

__version__ = "0.1.0"

from .errors import (
    BadGauge,
    BadParams,
    CertificateFailed,
    ConfigError,
    DomainExit,
    NotTwistFree,
    ParseError,
    PhespaceError,
    PoleInRange,
    SingularityReached,
    SingularPoint,
    UnsupportedFamily,
)

__all__ = [
    "__version__",
    "PhespaceError",
    "SingularPoint",
    "BadParams",
    "BadGauge",
    "NotTwistFree",
    "UnsupportedFamily",
    "CertificateFailed",
    "ParseError",
    "ConfigError",
    "PoleInRange",
    "SingularityReached",
    "DomainExit",
]
