"""
Tracking point on the manifold for a full trajectory, with the exponential attraction envelope
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from ..errors import ConvergenceError, DomainError, StructuralError
from ..noise.convolutions import propagate
from ..noise.paths import NoiseWindow, cells_covering
from ..simulation.integrator import StateLike, SystemModel, Trajectory, coerce_state, decay_slope, integrate_full
from .backward import DEFAULT_MAX_ITERATIONS, DEFAULT_TOL, RandomBound, compute_R, weighted_sup

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrackingSolution:
    """Correction Z = z_tilde - z on [-T_back, T_fwd] and the tracked trajectory z_tilde"""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    tracked_x: np.ndarray
    tracked_y: np.ndarray
    base: Trajectory
    residual: float
    iterations: int
    residual_history: List[float]
    random_bound: RandomBound
    contraction_constant: float
    envelope: np.ndarray  # on the forward grid t >= 0
    slope: float

    @property
    def forward(self) -> np.ndarray:
        return self.times >= -1e-12 * max(1.0, float(self.times[-1]))

    @property
    def tracking_point(self) -> Tuple[np.ndarray, np.ndarray]:
        i = int(np.argmax(self.forward))
        return self.tracked_x[i], self.tracked_y[i]

    @property
    def correction_norms(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=-1) + np.linalg.norm(self.y, axis=-1)

    @property
    def margins(self) -> np.ndarray:
        return self.envelope - self.correction_norms[self.forward]

    @property
    def envelope_passed(self) -> bool:
        return bool(np.all(self.margins >= 0))

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins))

    def to_frame(self) -> pd.DataFrame:
        if self.x.ndim != 2:
            raise StructuralError("to_frame() needs an unbatched solution")
        envelope = np.full(self.times.shape, np.nan)
        envelope[self.forward] = self.envelope
        return pd.DataFrame({"t": self.times, "correction_norm": self.correction_norms, "envelope": envelope})


def negative_time_extension(model: SystemModel, x0: np.ndarray, y0: np.ndarray, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(x0, (I - |t| B)^{-1} y0) on t <= 0, per fast mode 1 / (1 + |t| b_i)"""
    b = -model.b.diagonal_entries
    scale = 1.0 / (1.0 + np.abs(times)[:, None] * b[None, :])
    extra = (1,) * (y0.ndim - 1)
    ys = y0[None] * scale.reshape((len(times),) + extra + (len(b),))
    xs = np.broadcast_to(x0, (len(times),) + x0.shape).copy()
    return xs, ys


def solve_tracking(
    model: SystemModel,
    z0: Tuple[StateLike, StateLike],
    path: NoiseWindow,
    t_fwd: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    trajectory: Optional[Trajectory] = None,
) -> TrackingSolution:
    """Two-point fixed point for z_tilde with x_tilde matching x at T_fwd and y_tilde started in the far past.

    The default forward horizon is 10 eps / mu.
    """
    model.ensure_admissible()
    p = model.params
    dt = model.dt
    view = path.view()
    model.check_grid(view)
    batch = view.batch_shape
    x0 = coerce_state(z0[0], model.slow_dim, batch)
    y0 = coerce_state(z0[1], model.fast_dim, batch)
    horizon = 10 * p.epsilon / p.mu if t_fwd is None else t_fwd
    if horizon <= 0:
        raise DomainError(f"forward horizon must be positive, got {horizon}")
    n_b = model.back_cells(tol)
    n_f = cells_covering(horizon, dt)
    t_end = n_f * dt
    if trajectory is None:
        trajectory = integrate_full(model, (x0, y0), view, 0.0, t_end, check=False)
    elif len(trajectory.times) != n_f + 1:
        raise StructuralError(f"trajectory must cover [0, {t_end:g}] on the model grid")
    n = n_b + n_f
    times = dt * (np.arange(n + 1) - n_b)
    base_x, base_y = negative_time_extension(model, x0, y0, times)
    base_x[n_b:] = trajectory.x
    base_y[n_b:] = trajectory.y

    xi1, _ = model.noise(view, -n_b * dt, t_end)
    _, xi2 = model.noise(view, -2 * n_b * dt, t_end)
    ops = model.steps
    y_start = propagate(ops.exp_b, xi2[:n_b])[-1]
    xi2 = xi2[n_b:]

    def fast_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        _, gy = model.drift(x[:-1], y[:-1])
        forcing = xi2 if gy is None else ops.drift_b.apply(gy) + xi2
        return propagate(ops.exp_b, forcing, y_start)

    def apply_r(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        fx, _ = model.drift(x[:-1], y[:-1])
        forcing = xi1 if fx is None else ops.drift_a.apply(fx) + xi1
        x_new = np.empty_like(x)
        x_new[n] = base_x[n]
        for j in range(n - 1, -1, -1):
            x_new[j] = ops.exp_a_inv.apply(x_new[j + 1] - forcing[j])
        return x_new, fast_map(x, y)

    x = base_x.copy()
    k2 = fast_map(base_x, base_y)
    y = k2.copy()
    y[n_b:] = base_y[n_b:] + propagate(ops.exp_b, np.zeros((n_f,) + y0.shape), k2[n_b] - y0)

    weights = np.exp(p.mu / p.epsilon * times)
    history: List[float] = []
    for _ in range(max_iterations):
        x_new, y_new = apply_r(x, y)
        history.append(weighted_sup(weights, x_new - x, y_new - y))
        x, y = x_new, y_new
        if history[-1] <= tol:
            break
    else:
        raise ConvergenceError("tracking solve did not converge", history)

    bound = compute_R(model, view, tol)
    m = model.contraction_constant
    z0_norm = np.linalg.norm(x0, axis=-1) + np.linalg.norm(y0, axis=-1)
    fwd = times[n_b:]
    extra = (1,) * len(batch)
    decay = np.exp(-p.mu / p.epsilon * fwd).reshape((-1,) + extra)
    envelope = decay / (1 - m) * ((2 + 2 * m) * z0_norm + 2 * np.asarray(bound.value))
    corr_x, corr_y = x - base_x, y - base_y
    norms = np.linalg.norm(corr_x[n_b:], axis=-1) + np.linalg.norm(corr_y[n_b:], axis=-1)
    slope = decay_slope(fwd, norms.reshape(len(fwd), -1).max(axis=1), floor=100 * tol)
    logger.info(f"Tracking solve: {len(history)} iterations, residual {history[-1]:.3e}, decay slope {slope:.3g} (rate -mu/eps = {-p.mu / p.epsilon:.3g})")
    return TrackingSolution(
        times=times,
        x=corr_x,
        y=corr_y,
        tracked_x=x,
        tracked_y=y,
        base=trajectory,
        residual=history[-1],
        iterations=len(history),
        residual_history=history,
        random_bound=bound,
        contraction_constant=m,
        envelope=envelope,
        slope=slope,
    )
