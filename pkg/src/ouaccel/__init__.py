"""Rate-optimal non-reversible Ornstein-Uhlenbeck samplers for Gaussian targets."""

from .design import (
    CUSTOM,
    ELLIPTIC_OPTIMAL,
    HYPOELLIPTIC_OPTIMAL,
    REVERSIBLE_IDENTITY,
    REVERSIBLE_OPTIMAL,
    SamplerDesign,
    build_design,
    check_membership,
    hypoellipticity_check,
)
from .evolution import GaussianLaw, Schedule, evolve_law, kl_to_equilibrium, run_schedule
from .matrixcore import PrecisionMatrix, ValidationError, random_spd

__version__ = "0.1.0"

__all__ = [
    "CUSTOM",
    "ELLIPTIC_OPTIMAL",
    "HYPOELLIPTIC_OPTIMAL",
    "REVERSIBLE_IDENTITY",
    "REVERSIBLE_OPTIMAL",
    "GaussianLaw",
    "PrecisionMatrix",
    "SamplerDesign",
    "Schedule",
    "ValidationError",
    "build_design",
    "check_membership",
    "evolve_law",
    "hypoellipticity_check",
    "kl_to_equilibrium",
    "random_spd",
    "run_schedule",
]
