"""
Observation functions h, observation paths and Kallianpur-Striebel log-weight increments
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Type, Union

import numpy as np

from ..errors import DomainError, StructuralError
from ..noise.paths import NoiseWindow, cells_in
from ..simulation.integrator import Trajectory
from ..spectral.operators import HVector, SpaceSpec

logger = logging.getLogger(__name__)


class ObservationModel(ABC):
    """Bounded Lipschitz h: (x, y) -> R^dim3, read from a selection of slow coefficients"""

    kind = ""

    def __init__(
        self,
        slow_space: SpaceSpec,
        fast_space: SpaceSpec,
        dim3: int,
        params: Optional[Dict[str, Any]] = None,
        c_h: Optional[float] = None,
        h_lip: Optional[float] = None,
    ):
        if dim3 <= 0:
            raise DomainError(f"observation dimension must be positive, got {dim3}")
        self.slow_space = slow_space
        self.fast_space = fast_space
        self.dim3 = int(dim3)
        self.params = dict(params or {})
        coordinates = self.params.get("coordinates", list(range(min(self.dim3, slow_space.dim))))
        self._coordinates = np.asarray(coordinates, dtype=int)
        if self._coordinates.size != self.dim3 or np.any(self._coordinates < 0) or np.any(self._coordinates >= slow_space.dim):
            raise StructuralError(f"{self.kind}: need {self.dim3} slow coordinates inside [0, {slow_space.dim})")
        self._configure()
        natural_c, natural_lip = self.natural_bounds()
        self.c_h = float(natural_c if c_h is None else c_h)
        self.h_lip = float(natural_lip if h_lip is None else h_lip)
        if self.c_h < natural_c * (1 - 1e-12) or self.h_lip < natural_lip * (1 - 1e-12):
            raise DomainError(f"{self.kind}: declared bounds (C_h={self.c_h:g}, Lip={self.h_lip:g}) below the known ({natural_c:g}, {natural_lip:g})")

    def _configure(self) -> None:
        pass

    @abstractmethod
    def natural_bounds(self) -> tuple:
        """(sup ||h||, Lip(h)) implied by the parameters"""

    @abstractmethod
    def _evaluate(self, s: np.ndarray) -> np.ndarray:
        """h on the selected slow coordinates, shape (..., dim3)"""

    @property
    def coordinates(self) -> np.ndarray:
        return self._coordinates

    @property
    def is_zero(self) -> bool:
        return False

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.slow_space.check(x)
        return self._evaluate(x[..., self._coordinates])

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "dim3": self.dim3, "params": self.params, "c_h": self.c_h, "h_lip": self.h_lip}


class ZeroObservation(ObservationModel):
    kind = "zero"

    def natural_bounds(self) -> tuple:
        return 0.0, 0.0

    @property
    def is_zero(self) -> bool:
        return True

    def _evaluate(self, s: np.ndarray) -> np.ndarray:
        return np.zeros(s.shape)


class SineOfSlow(ObservationModel):
    kind = "sine-of-slow"

    def natural_bounds(self) -> tuple:
        return math.sqrt(self.dim3), 1.0

    def _evaluate(self, s: np.ndarray) -> np.ndarray:
        return np.sin(s)


class BoundedLinear(ObservationModel):
    """gain * clip(s, -bound, bound)"""

    kind = "bounded-linear"

    def _configure(self) -> None:
        self._gain = float(self.params.setdefault("gain", 1.0))
        self._bound = float(self.params.setdefault("bound", 1.0))
        if not self._bound > 0:
            raise DomainError("bounded-linear needs a positive clip bound")

    def natural_bounds(self) -> tuple:
        return abs(self._gain) * self._bound * math.sqrt(self.dim3), abs(self._gain)

    def _evaluate(self, s: np.ndarray) -> np.ndarray:
        return self._gain * np.clip(s, -self._bound, self._bound)


class TableObservation(ObservationModel):
    """Piecewise-linear scalar map, constant beyond the end knots"""

    kind = "user-table"

    def _configure(self) -> None:
        knots = np.asarray(self.params.get("knots", []), dtype=float)
        values = np.asarray(self.params.get("values", []), dtype=float)
        if knots.ndim != 1 or knots.size < 2 or knots.shape != values.shape:
            raise StructuralError("user-table needs matching 1-D 'knots' and 'values' with at least two entries")
        if np.any(np.diff(knots) <= 0):
            raise StructuralError("user-table knots must be strictly increasing")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise DomainError("user-table knots and values must be finite")
        self._knots, self._values = knots, values

    def natural_bounds(self) -> tuple:
        sup = float(np.max(np.abs(self._values))) * math.sqrt(self.dim3)
        return sup, float(np.max(np.abs(np.diff(self._values) / np.diff(self._knots))))

    def _evaluate(self, s: np.ndarray) -> np.ndarray:
        return np.interp(s, self._knots, self._values)


# Observation type registry
OBSERVATION_TYPES: Dict[str, Type[ObservationModel]] = {
    "zero": ZeroObservation,
    "sine-of-slow": SineOfSlow,
    "bounded-linear": BoundedLinear,
    "user-table": TableObservation,
}


def build_observation(
    kind: str,
    slow_space: SpaceSpec,
    fast_space: SpaceSpec,
    dim3: int,
    params: Optional[Dict[str, Any]] = None,
    c_h: Optional[float] = None,
    h_lip: Optional[float] = None,
) -> ObservationModel:
    cls = OBSERVATION_TYPES.get(kind)
    if cls is None:
        raise StructuralError(f"Unknown observation kind: {kind} (known: {', '.join(OBSERVATION_TYPES)})")
    return cls(slow_space, fast_space, dim3, params, c_h, h_lip)


@dataclass(frozen=True, eq=False)
class ObservationPath:
    """Increments dr on the observation grid [t0, t0 + n * step]"""

    times: np.ndarray
    increments: np.ndarray  # (n, dim3)
    step: float
    coarsen: int
    truth_ref: str

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def dim3(self) -> int:
        return int(self.increments.shape[-1])

    def steps_until(self, t: float) -> int:
        k = cells_in(t - float(self.times[0]), self.step)
        if not 0 <= k <= len(self.increments):
            raise DomainError(f"time {t} outside the observation window [{self.times[0]}, {self.t_end}]")
        return k

    def value(self, t: float) -> np.ndarray:
        """r_t - r_{t0}"""
        return np.sum(self.increments[: self.steps_until(t)], axis=0)


def generate_observation(truth: Trajectory, obs: ObservationModel, path: NoiseWindow, coarsen: int = 1) -> ObservationPath:
    """dr = h(z_t) dt + dW3 by the left-point rule on the simulation grid, summed over groups of `coarsen` steps"""
    if truth.batch_shape:
        raise StructuralError("observations are generated from a single truth trajectory")
    view = path.view()
    if coarsen <= 0:
        raise DomainError(f"coarsen must be positive, got {coarsen}")
    dt = truth.dt
    if abs(view.dt - dt) > 1e-12 * dt:
        raise StructuralError(f"truth grid dt = {dt:g} does not match the noise grid dt = {view.dt:g}")
    n_fine = len(truth.times) - 1
    if n_fine % coarsen:
        raise StructuralError(f"{n_fine} simulation steps are not a multiple of coarsen = {coarsen}")
    t0, t1 = float(truth.times[0]), float(truth.times[-1])
    dw3 = view.increments("w3", t0, t1)
    if dw3.shape[-1] != obs.dim3:
        raise StructuralError(f"W3 has dimension {dw3.shape[-1]} but h maps into dimension {obs.dim3}")
    fine = dw3 + obs(truth.x[:-1], truth.y[:-1]) * dt
    increments = fine.reshape((n_fine // coarsen, coarsen, obs.dim3)).sum(axis=1)
    if not np.all(np.isfinite(increments)):
        raise DomainError("observation increments are not finite")
    step = coarsen * dt
    times = t0 + step * np.arange(n_fine // coarsen + 1)
    return ObservationPath(times, increments, step, coarsen, f"{truth.path_ref}|{obs.kind}")


def ks_log_weight_step(h_val: Union[np.ndarray, HVector], dr: np.ndarray, dt: float) -> Union[float, np.ndarray]:
    """<h, dr> - |h|^2 dt / 2 along the last axis"""
    h = h_val.coeffs if isinstance(h_val, HVector) else np.asarray(h_val, dtype=float)
    out = np.sum(h * dr, axis=-1) - 0.5 * np.sum(h * h, axis=-1) * dt
    return float(out) if np.ndim(out) == 0 else out
