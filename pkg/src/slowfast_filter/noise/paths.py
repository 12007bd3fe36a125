"""
Two-sided discretized Q-Wiener paths with counter-based substreams and the shift flow theta_t
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DomainError, StructuralError, WindowExhaustedError
from ..spectral.operators import SpaceSpec

logger = logging.getLogger(__name__)

# Substream roles; combined with a replication index by stream_key()
STREAM_TRUTH = 0
STREAM_PARTICLES = 1
STREAM_REFERENCE = 2
STREAM_ROLES = 8

# Independent parts of one particle's stream, so a longer backward window never changes forward increments
_PART_W1_FWD, _PART_W1_BACK, _PART_W2_FWD, _PART_W2_BACK, _PART_W3 = range(5)

_ALIGN_TOL = 1e-9

COMPONENTS = ("w1", "w2", "w3")


def stream_key(replication: int, role: int) -> int:
    """Stream identifier for a (replication, role) pair"""
    return replication * STREAM_ROLES + role


def substream(seed: int, stream_id: int, particle: int, part: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, stream, particle, part) cell"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream_id, particle, part))))


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Trace-class covariance as one positive variance per scalar coefficient"""

    per_mode_variance: np.ndarray

    def __post_init__(self) -> None:
        k = np.asarray(self.per_mode_variance, dtype=float).reshape(-1)
        if k.size == 0:
            raise DomainError("covariance needs at least one mode")
        if not np.all(np.isfinite(k)) or np.any(k <= 0):
            raise DomainError("covariance variances must be finite and strictly positive")
        object.__setattr__(self, "per_mode_variance", k)

    @classmethod
    def power_law(cls, space: SpaceSpec, scale: float = 1.0, decay: float = 2.0) -> "CovarianceSpec":
        """k = scale * m^-decay for mode m = 1, 2, ...; both components of a 2x2 block share their mode's variance"""
        modes = np.repeat(np.arange(1, space.n_blocks + 1, dtype=float), space.block_layout)
        return cls(scale * modes ** (-decay))

    @property
    def dim(self) -> int:
        return int(self.per_mode_variance.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.per_mode_variance))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with n_back cells before t = 0 and n_fwd cells after"""

    dt: float
    n_back: int
    n_fwd: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"grid step must be positive, got {self.dt}")
        if self.n_back < 0 or self.n_fwd < 0:
            raise DomainError("grid cell counts must be non-negative")
        if self.n_back + self.n_fwd == 0:
            raise DomainError("empty grid")

    @classmethod
    def from_bounds(cls, dt: float, t_min: float, t_max: float) -> "TimeGrid":
        if not t_min <= 0 <= t_max:
            raise DomainError(f"grid must satisfy t_min <= 0 <= t_max, got [{t_min}, {t_max}]")
        return cls(dt, cells_in(-t_min, dt), cells_in(t_max, dt))

    @property
    def t_min(self) -> float:
        return -self.n_back * self.dt

    @property
    def t_max(self) -> float:
        return self.n_fwd * self.dt

    @property
    def n_cells(self) -> int:
        return self.n_back + self.n_fwd


def cells_in(t: float, dt: float) -> int:
    """Number of dt steps in t; t must be grid-aligned"""
    n = round(t / dt)
    if abs(n * dt - t) > _ALIGN_TOL * max(1.0, abs(t)):
        raise DomainError(f"time {t} is not a multiple of dt = {dt}")
    return int(n)


def cells_covering(t: float, dt: float) -> int:
    """Smallest number of dt steps reaching at least t"""
    return int(math.ceil(t / dt - _ALIGN_TOL))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Stored increments of W1, W2 on the two-sided grid and of W3 on [0, t_max].

    Arrays are laid out (cells, *batch, dim); W(0) = 0 by construction.
    """

    grid: TimeGrid
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    seed: int
    stream_id: int
    particle_offset: int = 0
    batched: bool = False
    label: str = field(default="")

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def t_min(self) -> float:
        return self.grid.t_min

    @property
    def t_max(self) -> float:
        return self.grid.t_max

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return tuple(self.w1.shape[1:-1])

    @property
    def path_ref(self) -> str:
        if self.label:
            return self.label
        span = f"{self.particle_offset}+{self.batch_shape[0]}" if self.batched else str(self.particle_offset)
        return f"{self.seed}:{self.stream_id}:{span}"

    def view(self) -> "ShiftedView":
        return ShiftedView(self, 0)

    def increments(self, component: str, t_from: float, t_to: float) -> np.ndarray:
        return self.view().increments(component, t_from, t_to)

    def wiener_value(self, component: str, t: float) -> np.ndarray:
        return self.view().wiener_value(component, t)

    def select(self, index: Union[slice, Sequence[int], np.ndarray]) -> "NoisePath":
        """Sub-ensemble along the particle axis"""
        if not self.batched:
            raise StructuralError("select() needs a batched path")
        picked = np.arange(self.batch_shape[0])[index]
        offset = self.particle_offset + int(picked[0]) if picked.size else self.particle_offset
        contiguous = picked.size > 0 and bool(np.all(np.diff(picked) == 1))
        label = "" if contiguous else f"{self.path_ref}[{','.join(map(str, picked))}]"
        return NoisePath(self.grid, self.w1[:, picked], self.w2[:, picked], self.w3[:, picked], self.seed, self.stream_id, offset, True, label)


@dataclass(frozen=True, eq=False)
class ShiftedView:
    """theta_s applied to a stored path: cell [t, t + dt) of the view is cell [t + s, t + s + dt) of the base"""

    base: NoisePath
    offset_cells: int

    @property
    def dt(self) -> float:
        return self.base.dt

    @property
    def offset(self) -> float:
        return self.offset_cells * self.base.dt

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.base.batch_shape

    @property
    def path_ref(self) -> str:
        return self.base.path_ref if self.offset_cells == 0 else f"{self.base.path_ref}@{self.offset:g}"

    @property
    def t_min(self) -> float:
        return self.base.t_min - self.offset

    @property
    def t_max(self) -> float:
        return self.base.t_max - self.offset

    def view(self) -> "ShiftedView":
        return self

    def _range(self, component: str, t_from: float, t_to: float) -> Tuple[np.ndarray, int, int]:
        if component not in COMPONENTS:
            raise StructuralError(f"unknown noise component {component}")
        if t_to < t_from:
            raise DomainError(f"reversed window [{t_from}, {t_to}]")
        dt = self.base.dt
        start = cells_in(t_from, dt) + self.offset_cells
        stop = cells_in(t_to, dt) + self.offset_cells
        if component == "w3":
            array, lo, hi = self.base.w3, 0, self.base.grid.n_fwd
        else:
            array = self.base.w1 if component == "w1" else self.base.w2
            lo, hi = -self.base.grid.n_back, self.base.grid.n_fwd
        if start < lo:
            raise WindowExhaustedError(f"{component} read starts before the stored window", (lo - start) * dt)
        if stop > hi:
            raise WindowExhaustedError(f"{component} read ends after the stored window", (stop - hi) * dt)
        base_index = 0 if component == "w3" else self.base.grid.n_back
        return array, start + base_index, stop + base_index

    def increments(self, component: str, t_from: float, t_to: float) -> np.ndarray:
        """Increments on the cells covering [t_from, t_to), shape (cells, *batch, dim)"""
        array, i, j = self._range(component, t_from, t_to)
        return array[i:j]

    def covers(self, component: str, t_from: float, t_to: float) -> bool:
        try:
            self._range(component, t_from, t_to)
        except WindowExhaustedError:
            return False
        return True

    def wiener_value(self, component: str, t: float) -> np.ndarray:
        """Path value W(t) with W(0) = 0, as a prefix sum of increments"""
        if t >= 0:
            return np.sum(self.increments(component, 0.0, t), axis=0)
        return -np.sum(self.increments(component, t, 0.0), axis=0)


NoiseWindow = Union[NoisePath, ShiftedView]


def shift(path: NoiseWindow, s: float) -> ShiftedView:
    """theta_s; shift(shift(p, s), t) reads exactly like shift(p, s + t)"""
    view = path.view()
    return ShiftedView(view.base, view.offset_cells + cells_in(s, view.dt))


def sample_path(
    cov1: CovarianceSpec,
    cov2: CovarianceSpec,
    dim3: int,
    grid: Union[TimeGrid, Tuple[float, float, float]],
    seed: int,
    stream_id: int,
    particles: Optional[int] = None,
    particle_offset: int = 0,
) -> NoisePath:
    """Sample increments deterministically from (seed, stream_id, particle index, grid).

    particles=None gives an unbatched path (cells, dim); otherwise (cells, particles, dim).
    """
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid.from_bounds(*grid)
    if dim3 < 0:
        raise DomainError(f"dim3 must be >= 0, got {dim3}")
    count = 1 if particles is None else int(particles)
    if count <= 0:
        raise DomainError(f"particle count must be positive, got {particles}")
    sd1 = np.sqrt(cov1.per_mode_variance * grid.dt)
    sd2 = np.sqrt(cov2.per_mode_variance * grid.dt)
    sd3 = math.sqrt(grid.dt)
    w1 = np.empty((grid.n_cells, count, cov1.dim))
    w2 = np.empty((grid.n_cells, count, cov2.dim))
    w3 = np.empty((grid.n_fwd, count, dim3))
    nb = grid.n_back
    for j in range(count):
        particle = particle_offset + j
        # backward cells are drawn outward from t = 0
        w1[nb:, j] = substream(seed, stream_id, particle, _PART_W1_FWD).standard_normal((grid.n_fwd, cov1.dim)) * sd1
        w1[:nb, j] = substream(seed, stream_id, particle, _PART_W1_BACK).standard_normal((nb, cov1.dim))[::-1] * sd1
        w2[nb:, j] = substream(seed, stream_id, particle, _PART_W2_FWD).standard_normal((grid.n_fwd, cov2.dim)) * sd2
        w2[:nb, j] = substream(seed, stream_id, particle, _PART_W2_BACK).standard_normal((nb, cov2.dim))[::-1] * sd2
        w3[:, j] = substream(seed, stream_id, particle, _PART_W3).standard_normal((grid.n_fwd, dim3)) * sd3
    if particles is None:
        w1, w2, w3 = w1[:, 0], w2[:, 0], w3[:, 0]
    logger.debug(f"Sampled noise path seed={seed} stream={stream_id} particles={count} cells={grid.n_cells}")
    return NoisePath(grid, w1, w2, w3, seed, stream_id, particle_offset, particles is not None)
