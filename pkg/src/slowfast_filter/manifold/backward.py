"""
Random invariant manifold by the backward fixed-point iteration
"""
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from ..errors import AdmissibilityError, ConvergenceError, DomainError, StructuralError
from ..models import VerificationReport
from ..noise.convolutions import backward_slow_convolution, propagate
from ..noise.paths import NoiseWindow, cells_in, shift
from ..simulation.integrator import StateLike, SystemModel, coerce_state
from ..spectral.hypotheses import (
    compute_contraction_constant,
    manifold_lipschitz_bound,
    weighted_contraction_constant,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERATIONS = 200
# Manifold values kept per ManifoldMap; least recently used are dropped first
DEFAULT_MEMO_SIZE = 4096

# Contraction target for the reference solve in the shift-property check
_REFERENCE_RATE_TARGET = 0.9


@dataclass(frozen=True, eq=False)
class BackwardSolution:
    """Fixed point (x_bar, y_bar) on the grid of [s - T_back, s]; arrays are (times, *batch, dim)"""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    s: float
    anchor: np.ndarray
    iterations: int
    residual: float
    residual_history: List[float]
    path_ref: str
    weight_rate: float

    @property
    def fast_value(self) -> np.ndarray:
        """H^{eps,s}(omega, x0) = y_bar_s"""
        return self.y[-1]

    @property
    def contraction_ratios(self) -> List[float]:
        h = self.residual_history
        return [b / a for a, b in zip(h[:-1], h[1:]) if a > 0]

    def advanced(self, x_next: np.ndarray) -> "BackwardSolution":
        """Warm start for the window one cell later, anchored at x_next"""
        x = np.concatenate([self.x[1:], x_next[None]], axis=0)
        y = np.concatenate([self.y[1:], self.y[-1:]], axis=0)
        dt = float(self.times[1] - self.times[0])
        return BackwardSolution(self.times + dt, x, y, self.s + dt, x_next, 0, math.inf, [], self.path_ref, self.weight_rate)

    def to_frame(self) -> pd.DataFrame:
        if self.x.ndim != 2:
            raise StructuralError("to_frame() needs an unbatched solution")
        columns = {"t": self.times}
        columns.update({f"x{i}": self.x[:, i] for i in range(self.x.shape[1])})
        columns.update({f"y{i}": self.y[:, i] for i in range(self.y.shape[1])})
        return pd.DataFrame(columns)


def weighted_sup(weights: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> float:
    size = np.linalg.norm(dx, axis=-1) + np.linalg.norm(dy, axis=-1)
    extra = (1,) * (size.ndim - 1)
    return float(np.max(weights.reshape((-1,) + extra) * size))


def solve_backward(
    model: SystemModel,
    x0: StateLike,
    s: float,
    path: NoiseWindow,
    tol: float = DEFAULT_TOL,
    t_back: Optional[float] = None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    weight_rate: Optional[float] = None,
    initial: Optional[BackwardSolution] = None,
    fast_lead_cells: Optional[int] = None,
) -> BackwardSolution:
    """Iterate the backward operator K to its fixed point anchored at x_bar_s = x0.

    The slow component is integrated backward from the anchor, the fast one forward from
    zero fast_lead_cells before the window (default: one window length). Convergence is
    measured in sup_t e^{rate (t - s)} ||dz_t||, rate = mu / eps unless weight_rate is given.
    """
    p = model.params
    rate = p.mu / p.epsilon if weight_rate is None else weight_rate
    m = compute_contraction_constant(p) if weight_rate is None else weighted_contraction_constant(p, rate)
    if m >= 1:
        raise AdmissibilityError(f"backward operator not contractive: M = {m:.4f} at weight rate {rate:g}")
    view = path.view()
    model.check_grid(view)
    n = model.back_cells(tol, t_back)
    lead = n if fast_lead_cells is None else fast_lead_cells
    dt = model.dt
    cells_in(s, dt)  # s must sit on the grid
    batch = view.batch_shape
    anchor = coerce_state(x0, model.slow_dim, batch)
    t_start = s - n * dt

    xi1, _ = model.noise(view, t_start, s)
    _, xi2 = model.noise(view, t_start - lead * dt, s)
    ops = model.steps
    y_start = propagate(ops.exp_b, xi2[:lead])[-1] if lead else np.zeros(batch + (model.fast_dim,))
    xi2 = xi2[lead:]

    def apply_k(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        fx, gy = model.drift(x[:-1], y[:-1])
        x_new = np.empty_like(x)
        x_new[n] = anchor
        forcing_x = xi1 if fx is None else ops.drift_a.apply(fx) + xi1
        for j in range(n - 1, -1, -1):
            x_new[j] = ops.exp_a_inv.apply(x_new[j + 1] - forcing_x[j])
        forcing_y = xi2 if gy is None else ops.drift_b.apply(gy) + xi2
        y_new = propagate(ops.exp_b, forcing_y, y_start)
        return x_new, y_new

    if initial is not None and initial.x.shape == (n + 1,) + anchor.shape:
        x, y = initial.x.copy(), initial.y.copy()
        x[n] = anchor
    else:
        # coupling-free start
        x = np.broadcast_to(anchor, (n + 1,) + anchor.shape).copy()
        for j in range(n - 1, -1, -1):
            x[j] = ops.exp_a_inv.apply(x[j + 1] - xi1[j])
        y = propagate(ops.exp_b, xi2, y_start)

    times = t_start + dt * np.arange(n + 1)
    weights = np.exp(rate * (times - s))
    history: List[float] = []
    for _ in range(max_iterations):
        x_new, y_new = apply_k(x, y)
        history.append(weighted_sup(weights, x_new - x, y_new - y))
        x, y = x_new, y_new
        if history[-1] <= tol:
            break
    else:
        raise ConvergenceError(f"backward solve at s={s:g} did not reach tol={tol:g}", history)
    logger.debug(f"Backward solve at s={s:g}: {len(history)} iterations, residual {history[-1]:.3e}")
    return BackwardSolution(times, x, y, s, anchor, len(history), history[-1], history, view.path_ref, rate)


class BackwardSolver:
    """Manifold provider for integrate_reduced: H^{eps,s}(omega, x) at any grid time s"""

    def __init__(self, model: SystemModel, tol: float = DEFAULT_TOL, t_back: Optional[float] = None, max_iterations: int = DEFAULT_MAX_ITERATIONS):
        self.model = model
        self.tol = tol
        self.t_back = t_back
        self.max_iterations = max_iterations

    def solve(self, x0: np.ndarray, s: float, window: NoiseWindow, initial: Optional[BackwardSolution] = None) -> BackwardSolution:
        return solve_backward(self.model, x0, s, window, self.tol, self.t_back, self.max_iterations, initial=initial)


class ManifoldMap:
    """Memoizing evaluator x0 -> H^{eps,s}(omega, x0) for one path and base time"""

    def __init__(
        self,
        model: SystemModel,
        s: float,
        path: NoiseWindow,
        tol: float = DEFAULT_TOL,
        t_back: Optional[float] = None,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        memo_size: int = DEFAULT_MEMO_SIZE,
    ):
        if memo_size < 1:
            raise DomainError(f"memo_size must be positive, got {memo_size}")
        self.model = model
        self.s = s
        self.path = path.view()
        self.path_ref = self.path.path_ref
        self.solver = BackwardSolver(model, tol, t_back, max_iterations)
        self.lip_bound = manifold_lipschitz_bound(model.params)
        self.lip_empirical = 0.0
        self.memo_size = memo_size
        self._memo: "OrderedDict[Tuple[Any, ...], np.ndarray]" = OrderedDict()
        self._lock = threading.Lock()

    @property
    def certified(self) -> bool:
        """The Lipschitz bound is only a certificate at s = 0"""
        return self.s == 0

    def _key(self, x0: np.ndarray) -> Tuple[Any, ...]:
        rounded = np.round(x0, 12) + 0.0
        return (rounded.shape, rounded.tobytes(), self.s, self.path_ref)

    def evaluate(self, x0: StateLike) -> np.ndarray:
        x = coerce_state(x0, self.model.slow_dim, self.path.batch_shape)
        key = self._key(x)
        with self._lock:
            cached = self._memo.get(key)
            if cached is not None:
                self._memo.move_to_end(key)
        if cached is not None:
            return cached.copy()
        value = self.solver.solve(x, self.s, self.path).fast_value
        with self._lock:
            self._memo.setdefault(key, value)
            while len(self._memo) > self.memo_size:
                self._memo.popitem(last=False)
        return value.copy()

    __call__ = evaluate

    def probe_lipschitz(self, pairs: int = 200, radius: float = 5.0, seed: int = 0) -> Dict[str, Any]:
        """Max ||H(x1) - H(x2)|| / ||x1 - x2|| over random pairs in a ball"""
        if self.path.batch_shape:
            raise StructuralError("Lipschitz probes need an unbatched path")
        rng = np.random.default_rng(seed)
        d = self.model.slow_dim
        ratios = []
        for _ in range(pairs):
            pts = rng.standard_normal((2, d))
            pts *= radius * rng.uniform(size=(2, 1)) ** (1.0 / d) / np.linalg.norm(pts, axis=1, keepdims=True)
            gap = float(np.linalg.norm(pts[0] - pts[1]))
            if gap == 0:
                continue
            ratios.append(float(np.linalg.norm(self.evaluate(pts[0]) - self.evaluate(pts[1]))) / gap)
        observed = max(ratios, default=0.0)
        self.lip_empirical = max(self.lip_empirical, observed)
        passed: Optional[bool] = None
        if self.certified:
            passed = self.lip_empirical <= self.lip_bound * 1.05
        else:
            logger.warning(f"Lipschitz ratio {observed:.4g} at s={self.s:g} is reported without certification")
        return {"pairs": len(ratios), "max_ratio": observed, "lip_bound": self.lip_bound, "certified": self.certified, "passed": passed}


def build_manifold(model: SystemModel, s: float, path: NoiseWindow, tol: float = DEFAULT_TOL, t_back: Optional[float] = None) -> ManifoldMap:
    model.ensure_admissible()
    manifold = ManifoldMap(model, s, path, tol, t_back)
    logger.info(f"Manifold at s={s:g} on {manifold.path_ref}: Lipschitz bound {manifold.lip_bound:.4g}")
    return manifold


def minimal_contractive_rate(model: SystemModel, target: float = _REFERENCE_RATE_TARGET) -> float:
    """Smallest weight rate rho in (gamma1, mu/eps] with weighted contraction constant <= target"""
    p = model.params
    top = p.mu / p.epsilon
    if weighted_contraction_constant(p, top) > target:
        return top
    lo = p.gamma1 + 1e-12 * max(1.0, top)
    if weighted_contraction_constant(p, lo) <= target:
        return lo
    return float(brentq(lambda r: weighted_contraction_constant(p, r) - target, lo, top))


def verify_shift_property(
    model: SystemModel, path: NoiseWindow, s: float, t: float, x0: StateLike, tol: float = DEFAULT_TOL
) -> VerificationReport:
    """H^{eps,s}(theta_{t-s} omega, x_bar_t) against y_bar_t of the s-anchored solve"""
    if t > s:
        raise DomainError(f"shift property needs t <= s, got t={t}, s={s}")
    tolerance = 10 * tol
    view = path.view()
    n = model.back_cells(tol)
    if t == s:
        return VerificationReport(name="shift-property", passed=True, discrepancy=0.0, tolerance=tolerance, details={"s": s, "t": t})
    gap = s - t
    rate = minimal_contractive_rate(model)
    ref_tol = max(tol * math.exp(-rate * gap) / 10, 1e-13)
    k = cells_in(gap, model.dt)
    reference = solve_backward(
        model, x0, s, view, ref_tol, t_back=(k + n) * model.dt, weight_rate=rate, fast_lead_cells=n, max_iterations=10 * DEFAULT_MAX_ITERATIONS
    )
    i = n
    x_bar_t, y_bar_t = reference.x[i], reference.y[i]
    value = solve_backward(model, x_bar_t, s, shift(view, t - s), tol)
    discrepancy = float(np.max(np.linalg.norm(value.fast_value - y_bar_t, axis=-1)))
    logger.info(f"Shift property s={s:g}, t={t:g}: discrepancy {discrepancy:.3e} (tolerance {tolerance:.1e})")
    return VerificationReport(
        name="shift-property",
        passed=discrepancy <= tolerance,
        discrepancy=discrepancy,
        tolerance=tolerance,
        details={"s": s, "t": t, "reference_rate": rate, "reference_iterations": reference.iterations},
    )


@dataclass(frozen=True)
class RandomBound:
    """R(omega) = slow sup term + fast sup term (arrays carry the batch shape)"""

    slow: Union[float, np.ndarray]
    fast: Union[float, np.ndarray]

    @property
    def components(self) -> Tuple[Union[float, np.ndarray], Union[float, np.ndarray]]:
        return (self.slow, self.fast)

    @property
    def value(self) -> Union[float, np.ndarray]:
        return self.slow + self.fast


def compute_R(model: SystemModel, path: NoiseWindow, tol: float = DEFAULT_TOL, t_back: Optional[float] = None) -> RandomBound:
    """Both weighted suprema over the grid of [-T_back, 0]"""
    p = model.params
    view = path.view()
    model.check_grid(view)
    n = model.back_cells(tol, t_back)
    dt = model.dt
    times = -dt * np.arange(n, -1, -1)
    weights = np.exp(p.mu / p.epsilon * times)
    extra = (1,) * len(view.batch_shape)
    slow_states = backward_slow_convolution(model.a, p.sigma1, view, -n * dt, 0.0)
    _, xi2 = model.noise(view, -2 * n * dt, 0.0)
    fast_states = propagate(model.steps.exp_b, xi2)[n:]
    w = weights.reshape((-1,) + extra)
    slow = np.max(w * np.linalg.norm(slow_states, axis=-1), axis=0)
    fast = np.max(w * np.linalg.norm(fast_states, axis=-1), axis=0)
    if not extra:
        return RandomBound(float(slow), float(fast))
    return RandomBound(slow, fast)
