"""
Exception hierarchy for the slow-fast filter toolkit
"""
from typing import List, Optional


class SlowFastError(Exception):
    """Base class for all toolkit errors"""


class StructuralError(SlowFastError, ValueError):
    """Shapes, spaces, grids or dictionaries do not line up"""


class DomainError(SlowFastError, ValueError):
    """Input outside the domain of an operation (non-finite, misaligned, degenerate)"""


class ConfigError(SlowFastError, ValueError):
    """Scenario file could not be parsed or validated"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.field = field
        self.line = line


class AdmissibilityError(SlowFastError):
    """Rate/scale parameters outside the contraction window"""


class WindowExhaustedError(SlowFastError):
    """A read fell outside the stored noise window"""

    def __init__(self, message: str, required_extension: float):
        super().__init__(f"{message}; extend the window by at least {required_extension:g}")
        self.required_extension = required_extension


class ConvergenceError(SlowFastError):
    """Fixed-point iteration hit its iteration cap"""

    def __init__(self, message: str, residual_history: List[float]):
        last = residual_history[-1] if residual_history else float("nan")
        super().__init__(f"{message} after {len(residual_history)} iterations (last residual {last:.3e})")
        self.residual_history = list(residual_history)


class DivergenceError(SlowFastError):
    """State norm blew past the divergence guard"""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} at step {step}")
        self.step = step


class DegeneracyError(SlowFastError):
    """Particle weights collapsed onto too few particles"""

    def __init__(self, message: str, ess: float):
        super().__init__(f"{message} (ESS={ess:.2f})")
        self.ess = ess
