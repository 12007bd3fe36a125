"""
Stochastic convolutions by exact per-block recursions
"""
import logging
import math
from typing import Optional

import numpy as np

from ..errors import DomainError
from ..spectral.operators import BlockMatrix, HVector, SpectralOperator
from .paths import NoiseWindow, cells_in

logger = logging.getLogger(__name__)


def slow_noise_increments(a: SpectralOperator, sigma1: float, window: NoiseWindow, t_from: float, t_to: float) -> np.ndarray:
    """Per-step increments of int e^{A(t-r)} sigma1 dW1 over the cells of [t_from, t_to)"""
    view = window.view()
    raw = view.increments("w1", t_from, t_to)
    if sigma1 == 0:
        return np.zeros_like(raw)
    return sigma1 * a.noise_filter(view.dt).apply(raw)


def fast_noise_increments(b: SpectralOperator, sigma2: float, eps: float, window: NoiseWindow, t_from: float, t_to: float) -> np.ndarray:
    """Per-step increments of int e^{(B/eps)(t-r)} (sigma2/sqrt(eps)) dW2 over the cells of [t_from, t_to)"""
    if eps <= 0:
        raise DomainError(f"epsilon must be positive, got {eps}")
    view = window.view()
    raw = view.increments("w2", t_from, t_to)
    if sigma2 == 0:
        return np.zeros_like(raw)
    return (sigma2 / math.sqrt(eps)) * b.scaled(1.0 / eps).noise_filter(view.dt).apply(raw)


def propagate(step: BlockMatrix, xi: np.ndarray, start: Optional[np.ndarray] = None) -> np.ndarray:
    """States v_0 .. v_n of v_{j+1} = step v_j + xi_j, v_0 = start (zero by default)"""
    states = np.empty((xi.shape[0] + 1,) + xi.shape[1:])
    states[0] = 0.0 if start is None else start
    for j in range(xi.shape[0]):
        states[j + 1] = step.apply(states[j]) + xi[j]
    return states


def ou_convolution(
    b: SpectralOperator, sigma2: float, eps: float, path: NoiseWindow, t: float, t_back: Optional[float] = None
) -> HVector:
    """Truncated int_{-inf}^t e^{(B/eps)(t-r)} (sigma2/sqrt(eps)) dW2(r), started from zero at t - t_back.

    t_back=None uses everything the window stores before t.
    """
    view = path.view()
    start = view.t_min if t_back is None else t - t_back
    xi = fast_noise_increments(b, sigma2, eps, view, start, t)
    step = b.scaled(1.0 / eps).exp(view.dt)
    v = np.zeros(xi.shape[1:])
    for j in range(xi.shape[0]):
        v = step.apply(v) + xi[j]
    return HVector(b.space, v)


def slow_convolution(a: SpectralOperator, sigma1: float, path: NoiseWindow, t_from: float, t_to: float) -> HVector:
    """int_{t_from}^{t_to} e^{A(t_to - r)} sigma1 dW1(r) by the per-step recursion"""
    view = path.view()
    if t_to < t_from:
        raise DomainError(f"slow_convolution needs t_from <= t_to, got {t_from} > {t_to}")
    xi = slow_noise_increments(a, sigma1, view, t_from, t_to)
    step = a.exp(view.dt)
    v = np.zeros(xi.shape[1:])
    for j in range(xi.shape[0]):
        v = step.apply(v) + xi[j]
    return HVector(a.space, v)


def backward_slow_convolution(a: SpectralOperator, sigma1: float, path: NoiseWindow, t_from: float, t_to: float) -> np.ndarray:
    """S_j = int_{t_j}^{t_to} e^{A(t_j - r)} sigma1 dW1(r) on every grid point of [t_from, t_to], by S_j = E^{-1}(S_{j+1} + xi_j)"""
    view = path.view()
    xi = slow_noise_increments(a, sigma1, view, t_from, t_to)
    inverse = a.exp(-view.dt)
    n = cells_in(t_to - t_from, view.dt)
    states = np.zeros((n + 1,) + xi.shape[1:])
    for j in range(n - 1, -1, -1):
        states[j] = inverse.apply(states[j + 1] + xi[j])
    return states
