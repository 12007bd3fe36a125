"""
Shared fixtures: small deterministic slow-fast models and noise paths
"""
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pytest

from slowfast_filter.noise.paths import CovarianceSpec, NoisePath, sample_path
from slowfast_filter.scenarios import ScenarioTemplateEngine
from slowfast_filter.simulation.integrator import SystemModel
from slowfast_filter.spectral.hypotheses import SystemParams, auto_gamma1, default_mu
from slowfast_filter.spectral.nonlinearities import build_nonlinearity
from slowfast_filter.spectral.operators import SpectralOperator


def make_system(
    slow: str = "wave",
    modes: int = 2,
    damping: float = 1.0,
    slow_entries: Optional[Sequence[float]] = None,
    fast_entries: Sequence[float] = (-2.0, -8.0),
    f_kind: str = "zero",
    g_kind: str = "zero",
    f_params: Optional[Dict[str, Any]] = None,
    g_params: Optional[Dict[str, Any]] = None,
    sigma1: float = 0.5,
    sigma2: float = 0.5,
    epsilon: float = 0.1,
    lipschitz: Optional[float] = None,
    mu: Optional[float] = None,
    gamma1: Optional[float] = None,
) -> SystemModel:
    if slow == "wave":
        a = SpectralOperator.wave("slow", [float(k * k) for k in range(1, modes + 1)], damping)
    else:
        a = SpectralOperator.diagonal("slow", slow_entries)
    b = SpectralOperator.diagonal("fast", fast_entries)
    f = build_nonlinearity(f_kind, a.space, b.space, "slow", f_params)
    g = build_nonlinearity(g_kind, a.space, b.space, "fast", g_params)
    gamma2 = float(np.min(-b.diagonal_entries))
    lip = max(f.declared_lipschitz, g.declared_lipschitz) if lipschitz is None else lipschitz
    params = SystemParams(
        epsilon=epsilon,
        sigma1=sigma1,
        sigma2=sigma2,
        gamma1=auto_gamma1(a) if gamma1 is None else gamma1,
        gamma2=gamma2,
        lipschitz=lip,
        mu=default_mu(gamma2, lip) if mu is None else mu,
    )
    return SystemModel(a, b, f, g, params, CovarianceSpec.power_law(a.space), CovarianceSpec.power_law(b.space))


def make_path(model: SystemModel, t_end: float, back_cells: int = 0, dim3: int = 0, seed: int = 7, stream_id: int = 0, particles: Optional[int] = None) -> NoisePath:
    grid = model.grid(t_end, back_cells * model.dt)
    return sample_path(model.cov1, model.cov2, dim3, grid, seed, stream_id, particles=particles)


@pytest.fixture
def decoupled_model() -> SystemModel:
    """F = G = 0 with a single fast mode, so fast decay is exactly exp(-2 t / eps)"""
    return make_system(fast_entries=(-2.0,), epsilon=0.05)


@pytest.fixture
def thermo_model() -> SystemModel:
    """Three-mode thermoelastic system (gamma = 1, kappa = 2, amplitude 0.5) at eps = 0.1"""
    return make_system(
        modes=3,
        fast_entries=(-2.0, -8.0, -18.0),
        f_kind="thermoelastic-coupling",
        g_kind="thermoelastic-coupling",
        f_params={"amplitude": 0.5},
        g_params={"amplitude": 0.5},
        epsilon=0.1,
    )


@pytest.fixture
def contraction_model() -> SystemModel:
    """L = 0.5, gamma1 = 0, gamma2 = 2, mu = 1, eps = 0.1, so M = 0.55"""
    return make_system(
        damping=0.0,
        f_kind="sine-saturating",
        g_kind="sine-saturating",
        f_params={"amplitude": 0.5, "source": "y"},
        g_params={"amplitude": 0.5, "source": "x"},
        epsilon=0.1,
        mu=1.0,
    )


@pytest.fixture
def engine() -> ScenarioTemplateEngine:
    return ScenarioTemplateEngine()
