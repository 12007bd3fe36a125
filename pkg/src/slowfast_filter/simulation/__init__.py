from .integrator import (
    PicardReport,
    StepOperators,
    SystemModel,
    Trajectory,
    apriori_bound,
    decay_slope,
    integrate_full,
    integrate_reduced,
    picard_diagnostic,
    verify_cocycle,
)

__all__ = [
    "PicardReport",
    "StepOperators",
    "SystemModel",
    "Trajectory",
    "apriori_bound",
    "decay_slope",
    "integrate_full",
    "integrate_reduced",
    "picard_diagnostic",
    "verify_cocycle",
]
