"""
Exponential-Euler integration of the slow-fast system in mild form
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, List, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import AdmissibilityError, DivergenceError, DomainError, StructuralError
from ..models import VerificationReport
from ..noise.convolutions import fast_noise_increments, propagate, slow_noise_increments
from ..noise.paths import CovarianceSpec, NoiseWindow, TimeGrid, cells_in, shift
from ..spectral.hypotheses import (
    SystemParams,
    backward_horizon,
    compute_contraction_constant,
    compute_epsilon0,
)
from ..spectral.nonlinearities import Nonlinearity
from ..spectral.operators import BlockMatrix, HVector, SpectralOperator

logger = logging.getLogger(__name__)

# Abort when a state norm exceeds this multiple of (1 + ||z0||)
DIVERGENCE_FACTOR = 1e6

StateLike = Union[np.ndarray, HVector]


@dataclass(frozen=True, eq=False)
class StepOperators:
    """Per-step exact factors for one dt"""

    dt: float
    exp_a: BlockMatrix
    exp_a_inv: BlockMatrix
    drift_a: BlockMatrix  # dt * phi_1(A dt)
    exp_b: BlockMatrix  # e^{(B/eps) dt}
    drift_b: BlockMatrix  # (dt/eps) * phi_1(B dt / eps)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """The full slow-fast system: operators, couplings, scales and noise covariances"""

    a: SpectralOperator
    b: SpectralOperator
    f: Nonlinearity
    g: Nonlinearity
    params: SystemParams
    cov1: CovarianceSpec
    cov2: CovarianceSpec
    oversample_fast: int = 10
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.f.target != "slow" or self.g.target != "fast":
            raise StructuralError("F must target the slow space and G the fast space")
        for nl in (self.f, self.g):
            if nl.slow_space != self.a.space or nl.fast_space != self.b.space:
                raise StructuralError(f"{nl.kind} is defined on different spaces than the operators")
        if self.cov1.dim != self.a.space.dim or self.cov2.dim != self.b.space.dim:
            raise StructuralError("covariance dimensions must match the slow/fast spaces")
        if self.oversample_fast <= 0:
            raise DomainError("oversample_fast must be positive")

    @property
    def epsilon(self) -> float:
        return self.params.epsilon

    @property
    def dt(self) -> float:
        return self.params.epsilon / self.oversample_fast

    @property
    def slow_dim(self) -> int:
        return self.a.space.dim

    @property
    def fast_dim(self) -> int:
        return self.b.space.dim

    def with_epsilon(self, epsilon: float) -> "SystemModel":
        return replace(self, params=self.params.with_epsilon(epsilon))

    @cached_property
    def steps(self) -> StepOperators:
        dt, eps = self.dt, self.epsilon
        fast = self.b.scaled(1.0 / eps)
        return StepOperators(
            dt=dt,
            exp_a=self.a.exp(dt),
            exp_a_inv=self.a.exp(-dt),
            drift_a=self.a.phi1(dt).scaled(dt),
            exp_b=fast.exp(dt),
            drift_b=fast.phi1(dt).scaled(dt),
        )

    @cached_property
    def contraction_constant(self) -> float:
        return compute_contraction_constant(self.params)

    @cached_property
    def epsilon0(self) -> float:
        return compute_epsilon0(self.params)

    def ensure_admissible(self) -> None:
        """Cheap structural gate run before every integration; the full probe check lives in check_hypotheses"""
        p = self.params
        if not self.b.is_diagonal or np.any(self.b.diagonal_entries > -p.gamma2 * (1 - 1e-9)):
            raise AdmissibilityError("fast operator must be diagonal with entries <= -gamma2")
        if p.gamma2 <= p.lipschitz:
            raise AdmissibilityError(f"gamma2 = {p.gamma2:g} must exceed L = {p.lipschitz:g}")
        if max(self.f.declared_lipschitz, self.g.declared_lipschitz) > p.lipschitz * (1 + 1e-9):
            raise AdmissibilityError("a coupling's Lipschitz constant exceeds the system L")
        eps0 = self.epsilon0
        if not p.epsilon < eps0:
            raise AdmissibilityError(f"epsilon = {p.epsilon:g} must lie strictly below eps0 = {eps0:.6g}")
        if self.contraction_constant >= 1:
            raise AdmissibilityError(f"contraction constant M = {self.contraction_constant:.4f} >= 1")

    def back_cells(self, tol: float, t_back: Optional[float] = None) -> int:
        """Grid cells in the backward truncation window"""
        horizon = backward_horizon(self.params, tol) if t_back is None else t_back
        return max(1, int(math.ceil(horizon / self.dt - 1e-9)))

    def grid(self, t_end: float, back: float = 0.0) -> TimeGrid:
        """Grid on [-back, t_end] in units of this model's dt (back rounded up to whole cells)"""
        dt = self.dt
        return TimeGrid(dt, int(math.ceil(back / dt - 1e-9)), cells_in(t_end, dt))

    def drift(self, x: np.ndarray, y: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        fx = None if self.f.is_zero else self.f(x, y)
        gy = None if self.g.is_zero else self.g(x, y)
        return fx, gy

    def step(self, x: np.ndarray, y: np.ndarray, xi1: np.ndarray, xi2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """One exponential-Euler step; depends on absolute time only through the supplied increments"""
        ops = self.steps
        fx, gy = self.drift(x, y)
        x_new = ops.exp_a.apply(x)
        if fx is not None:
            x_new = x_new + ops.drift_a.apply(fx)
        y_new = ops.exp_b.apply(y)
        if gy is not None:
            y_new = y_new + ops.drift_b.apply(gy)
        return x_new + xi1, y_new + xi2

    def noise(self, window: NoiseWindow, t_from: float, t_to: float) -> Tuple[np.ndarray, np.ndarray]:
        """Filtered slow and fast noise increments on the cells of [t_from, t_to)"""
        self.check_grid(window)
        p = self.params
        xi1 = slow_noise_increments(self.a, p.sigma1, window, t_from, t_to)
        xi2 = fast_noise_increments(self.b, p.sigma2, p.epsilon, window, t_from, t_to)
        return xi1, xi2

    def check_grid(self, window: NoiseWindow) -> None:
        if abs(window.dt - self.dt) > 1e-12 * self.dt:
            raise StructuralError(f"noise grid dt = {window.dt:g} does not match model dt = eps/oversample = {self.dt:g}")

    def describe(self) -> dict:
        p = self.params
        return {
            "name": self.name,
            "slow_dim": self.slow_dim,
            "fast_dim": self.fast_dim,
            "epsilon": p.epsilon,
            "dt": self.dt,
            "F": self.f.describe(),
            "G": self.g.describe(),
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on a uniform grid; arrays are (times, *batch, dim)"""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    path_ref: str
    mode: str = "full"
    iterations: List[int] = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return tuple(self.x.shape[1:-1])

    def index_of(self, t: float) -> int:
        return cells_in(t - float(self.times[0]), self.dt) if len(self.times) > 1 else 0

    def state(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        i = self.index_of(t)
        if not 0 <= i < len(self.times):
            raise DomainError(f"time {t} outside trajectory [{self.times[0]}, {self.times[-1]}]")
        return self.x[i], self.y[i]

    def norms(self) -> np.ndarray:
        """||x_t|| + ||y_t|| per grid point"""
        return np.linalg.norm(self.x, axis=-1) + np.linalg.norm(self.y, axis=-1)

    def gap(self, other: "Trajectory") -> np.ndarray:
        if self.x.shape != other.x.shape or not np.allclose(self.times, other.times):
            raise StructuralError("trajectories must share grid and shapes")
        return np.linalg.norm(self.x - other.x, axis=-1) + np.linalg.norm(self.y - other.y, axis=-1)

    def to_frame(self) -> pd.DataFrame:
        """Columns t, x0.., y0.. (unbatched trajectories only)"""
        if self.batch_shape:
            raise StructuralError("to_frame() needs an unbatched trajectory")
        columns = {"t": self.times}
        columns.update({f"x{i}": self.x[:, i] for i in range(self.x.shape[-1])})
        columns.update({f"y{i}": self.y[:, i] for i in range(self.y.shape[-1])})
        return pd.DataFrame(columns)


class ManifoldProvider(Protocol):
    def solve(self, x0: np.ndarray, s: float, window: NoiseWindow, initial: Optional[Any] = None) -> Any: ...


def coerce_state(v: StateLike, dim: int, batch: Tuple[int, ...]) -> np.ndarray:
    arr = v.coeffs if isinstance(v, HVector) else np.asarray(v, dtype=float)
    if arr.shape[-1:] != (dim,):
        raise StructuralError(f"initial state has trailing dimension {arr.shape[-1:]} but the space has {dim}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("initial state must be finite")
    return np.broadcast_to(arr, batch + (dim,)).copy()


def _guard(z0_norm: float) -> float:
    return DIVERGENCE_FACTOR * (1.0 + z0_norm)


def _check_state(x: np.ndarray, y: np.ndarray, limit: float, step: int) -> None:
    size = np.linalg.norm(x, axis=-1) + np.linalg.norm(y, axis=-1)
    if not np.all(np.isfinite(size)) or np.max(size) > limit:
        raise DivergenceError(f"state norm {np.max(size):.3e} exceeded the divergence guard {limit:.3e}", step)


def integrate_full(
    model: SystemModel, z0: Tuple[StateLike, StateLike], path: NoiseWindow, t0: float, t1: float, check: bool = True
) -> Trajectory:
    """Exponential-Euler mild stepping of the full system on [t0, t1]"""
    if check:
        model.ensure_admissible()
    if not t1 > t0:
        raise DomainError(f"need t0 < t1, got [{t0}, {t1}]")
    view = path.view()
    n_steps = cells_in(t1 - t0, model.dt)
    cells_in(t0, model.dt)  # t0 must sit on the grid
    batch = view.batch_shape
    x0 = coerce_state(z0[0], model.slow_dim, batch)
    y0 = coerce_state(z0[1], model.fast_dim, batch)
    xi1, xi2 = model.noise(view, t0, t1)
    limit = _guard(float(np.max(np.linalg.norm(x0, axis=-1) + np.linalg.norm(y0, axis=-1))))
    x = np.empty((n_steps + 1,) + x0.shape)
    y = np.empty((n_steps + 1,) + y0.shape)
    x[0], y[0] = x0, y0
    for n in range(n_steps):
        x[n + 1], y[n + 1] = model.step(x[n], y[n], xi1[n], xi2[n])
        _check_state(x[n + 1], y[n + 1], limit, n + 1)
    times = t0 + model.dt * np.arange(n_steps + 1)
    return Trajectory(times, x, y, view.path_ref, "full")


def integrate_reduced(
    model: SystemModel,
    x0: StateLike,
    manifold: Optional[ManifoldProvider],
    path: NoiseWindow,
    t0: float,
    t1: float,
    check: bool = True,
) -> Trajectory:
    """Slow equation driven by F(x, H(theta_t omega, x)); the fast slot holds the manifold value"""
    if check:
        model.ensure_admissible()
    if manifold is None:
        from ..manifold.backward import BackwardSolver

        manifold = BackwardSolver(model)
    if not t1 > t0:
        raise DomainError(f"need t0 < t1, got [{t0}, {t1}]")
    view = path.view()
    n_steps = cells_in(t1 - t0, model.dt)
    batch = view.batch_shape
    xs = coerce_state(x0, model.slow_dim, batch)
    xi1, _ = model.noise(view, t0, t1)
    ops = model.steps
    x = np.empty((n_steps + 1,) + xs.shape)
    y = np.empty((n_steps + 1,) + batch + (model.fast_dim,))
    x[0] = xs
    solution = manifold.solve(xs, t0, view)
    y[0] = solution.fast_value
    iterations = [solution.iterations]
    limit = _guard(float(np.max(np.linalg.norm(xs, axis=-1) + np.linalg.norm(y[0], axis=-1))))
    for n in range(n_steps):
        x_next = ops.exp_a.apply(x[n]) + xi1[n]
        if not model.f.is_zero:
            x_next = x_next + ops.drift_a.apply(model.f(x[n], y[n]))
        t_next = t0 + (n + 1) * model.dt
        solution = manifold.solve(x_next, t_next, view, initial=solution.advanced(x_next))
        x[n + 1], y[n + 1] = x_next, solution.fast_value
        iterations.append(solution.iterations)
        _check_state(x[n + 1], y[n + 1], limit, n + 1)
    logger.debug(f"Reduced run on {view.path_ref}: mean manifold iterations {np.mean(iterations):.1f}")
    times = t0 + model.dt * np.arange(n_steps + 1)
    return Trajectory(times, x, y, view.path_ref, "reduced", iterations)


def verify_cocycle(model: SystemModel, z0: Tuple[StateLike, StateLike], path: NoiseWindow, s: float, t: float) -> VerificationReport:
    """phi(t + s, omega) z0 against phi(t, theta_s omega) phi(s, omega) z0 on the same increments"""
    if s < 0 or t < 0:
        raise DomainError("cocycle check needs s, t >= 0")
    view = path.view()
    batch = view.batch_shape
    x0 = coerce_state(z0[0], model.slow_dim, batch)
    y0 = coerce_state(z0[1], model.fast_dim, batch)
    z0_norm = float(np.max(np.linalg.norm(x0, axis=-1) + np.linalg.norm(y0, axis=-1)))
    tolerance = 1e-10 * (1.0 + z0_norm)
    if s + t == 0:
        return VerificationReport(name="cocycle", passed=True, discrepancy=0.0, tolerance=tolerance, details={"s": s, "t": t})
    left = integrate_full(model, (x0, y0), view, 0.0, s + t)
    if s > 0:
        mid = integrate_full(model, (x0, y0), view, 0.0, s)
        xs, ys = mid.x[-1], mid.y[-1]
    else:
        xs, ys = x0, y0
    k = cells_in(s, model.dt)
    if t > 0:
        right = integrate_full(model, (xs, ys), shift(view, s), 0.0, t)
        discrepancy = float(np.max(np.linalg.norm(left.x[k:] - right.x, axis=-1) + np.linalg.norm(left.y[k:] - right.y, axis=-1)))
    else:
        discrepancy = float(np.max(np.linalg.norm(left.x[-1] - xs, axis=-1) + np.linalg.norm(left.y[-1] - ys, axis=-1)))
    return VerificationReport(
        name="cocycle", passed=discrepancy <= tolerance, discrepancy=discrepancy, tolerance=tolerance, details={"s": s, "t": t}
    )


@dataclass
class PicardReport:
    window: float
    bound: float
    factors: List[float]
    distances: List[float]
    distance_to_stepper: float

    @property
    def passed(self) -> bool:
        return all(f <= self.bound + 1e-6 for f in self.factors)


def picard_diagnostic(
    model: SystemModel, z0: Tuple[StateLike, StateLike], path: NoiseWindow, t0: float, window: float, iterations: int = 12
) -> PicardReport:
    """Picard iteration of the mild map on [t0, t0 + window], contracting by L T0 + L / gamma2 in the sup norm"""
    p = model.params
    bound = p.lipschitz * window + p.lipschitz / p.gamma2
    if bound >= 1:
        raise AdmissibilityError(f"window {window:g} too long: L T0 + L/gamma2 = {bound:.4f} >= 1")
    view = path.view()
    batch = view.batch_shape
    x0 = coerce_state(z0[0], model.slow_dim, batch)
    y0 = coerce_state(z0[1], model.fast_dim, batch)
    n = cells_in(window, model.dt)
    xi1, xi2 = model.noise(view, t0, t0 + window)
    ops = model.steps
    ux = np.broadcast_to(x0, (n + 1,) + x0.shape).copy()
    uy = np.broadcast_to(y0, (n + 1,) + y0.shape).copy()
    distances: List[float] = []
    for _ in range(iterations):
        fx, gy = model.drift(ux[:-1], uy[:-1])
        forcing_x = xi1 if fx is None else ops.drift_a.apply(fx) + xi1
        forcing_y = xi2 if gy is None else ops.drift_b.apply(gy) + xi2
        vx = propagate(ops.exp_a, forcing_x, x0)
        vy = propagate(ops.exp_b, forcing_y, y0)
        d = float(np.max(np.linalg.norm(vx - ux, axis=-1) + np.linalg.norm(vy - uy, axis=-1)))
        distances.append(d)
        ux, uy = vx, vy
        if d < 1e-13 * (1.0 + float(np.max(np.abs(ux)))):
            break
    factors = [b / a for a, b in zip(distances[:-1], distances[1:]) if a > 1e-11]
    stepper = integrate_full(model, (x0, y0), view, t0, t0 + window, check=False)
    gap = float(np.max(np.linalg.norm(stepper.x - ux, axis=-1) + np.linalg.norm(stepper.y - uy, axis=-1)))
    logger.info(f"Picard diagnostic: {len(distances)} iterations, worst factor {max(factors, default=0.0):.4f} (bound {bound:.4f})")
    return PicardReport(window=window, bound=bound, factors=factors, distances=distances, distance_to_stepper=gap)


def apriori_bound(model: SystemModel, z0: Tuple[StateLike, StateLike], path: NoiseWindow, t0: float, t1: float) -> float:
    """Gronwall bound (||z0|| + N_T) / (1 - L/gamma2) * exp(L T / (1 - L/gamma2)) on sup ||x_t|| + ||y_t||"""
    p = model.params
    view = path.view()
    batch = view.batch_shape
    x0 = coerce_state(z0[0], model.slow_dim, batch)
    y0 = coerce_state(z0[1], model.fast_dim, batch)
    xi1, xi2 = model.noise(view, t0, t1)
    ops = model.steps
    conv = np.linalg.norm(propagate(ops.exp_a, xi1), axis=-1) + np.linalg.norm(propagate(ops.exp_b, xi2), axis=-1)
    n_t = np.max(conv, axis=0)
    z0_norm = np.linalg.norm(x0, axis=-1) + np.linalg.norm(y0, axis=-1)
    shrink = 1.0 - p.lipschitz / p.gamma2
    bound = (z0_norm + n_t) / shrink * np.exp(p.lipschitz * (t1 - t0) / shrink)
    return float(np.max(bound))


def decay_slope(times: np.ndarray, gaps: np.ndarray, floor: float = 1e-300) -> float:
    """Least-squares slope of log(gap) against t"""
    keep = gaps > floor
    if np.count_nonzero(keep) < 2:
        return float("-inf")
    slope, _ = np.polyfit(times[keep], np.log(gaps[keep]), 1)
    return float(slope)
