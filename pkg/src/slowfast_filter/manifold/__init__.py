from .backward import (
    BackwardSolution,
    BackwardSolver,
    ManifoldMap,
    RandomBound,
    build_manifold,
    compute_R,
    minimal_contractive_rate,
    solve_backward,
    verify_shift_property,
)
from .tracking import TrackingSolution, negative_time_extension, solve_tracking

__all__ = [
    "BackwardSolution",
    "BackwardSolver",
    "ManifoldMap",
    "RandomBound",
    "build_manifold",
    "compute_R",
    "minimal_contractive_rate",
    "solve_backward",
    "verify_shift_property",
    "TrackingSolution",
    "negative_time_extension",
    "solve_tracking",
]
