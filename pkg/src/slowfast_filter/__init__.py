"""
Slow-fast stochastic evolution systems: random invariant manifold reduction and reduced nonlinear filtering
"""

__version__ = "0.1.0"

from .errors import (
    AdmissibilityError,
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    SlowFastError,
    StructuralError,
    WindowExhaustedError,
)
from .scenarios import SCENARIO_CATALOG, ScenarioTemplateEngine
from .simulation import SystemModel, Trajectory, integrate_full, integrate_reduced

__all__ = [
    "__version__",
    "AdmissibilityError",
    "ConfigError",
    "ConvergenceError",
    "DegeneracyError",
    "DivergenceError",
    "DomainError",
    "SlowFastError",
    "StructuralError",
    "WindowExhaustedError",
    "SCENARIO_CATALOG",
    "ScenarioTemplateEngine",
    "SystemModel",
    "Trajectory",
    "integrate_full",
    "integrate_reduced",
]
