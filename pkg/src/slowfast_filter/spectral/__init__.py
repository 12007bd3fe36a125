from .operators import BlockMatrix, HVector, SpaceSpec, SpectralOperator, semigroup_apply
from .nonlinearities import NONLINEARITY_TYPES, Nonlinearity, build_nonlinearity, lipschitz_probe
from .hypotheses import (
    SystemParams,
    auto_gamma1,
    backward_horizon,
    check_hypotheses,
    compute_contraction_constant,
    compute_epsilon0,
    default_mu,
    manifold_lipschitz_bound,
    weighted_contraction_constant,
)

__all__ = [
    "BlockMatrix",
    "HVector",
    "SpaceSpec",
    "SpectralOperator",
    "semigroup_apply",
    "NONLINEARITY_TYPES",
    "Nonlinearity",
    "build_nonlinearity",
    "lipschitz_probe",
    "SystemParams",
    "auto_gamma1",
    "backward_horizon",
    "check_hypotheses",
    "compute_contraction_constant",
    "compute_epsilon0",
    "default_mu",
    "manifold_lipschitz_bound",
    "weighted_contraction_constant",
]
