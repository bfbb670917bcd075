"""Firm export-quality model, supplier search, shift-share shocks and the
econometric pipeline that recovers cost semi-elasticities from customs data."""
from .errors import (
    ConfigError,
    DegenerateClusters,
    DomainError,
    InvalidParameter,
    MissingLookup,
    NoBaseYear,
    NoConvergence,
    NonMonotoneGain,
    RankDeficient,
    SpecError,
    Unbounded,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateClusters",
    "DomainError",
    "InvalidParameter",
    "MissingLookup",
    "NoBaseYear",
    "NoConvergence",
    "NonMonotoneGain",
    "RankDeficient",
    "SpecError",
    "Unbounded",
]
