"""
Scenario configuration and report models for the slow-fast filter toolkit
"""
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Scenario configuration (YAML schema)
class SlowOperatorConfig(_Strict):
    kind: Literal["wave", "diagonal"] = "wave"
    modes: int = Field(16, gt=0)
    damping: float = Field(1.0, ge=0)
    eigenvalues: Optional[List[float]] = None  # lambda_k, default k^2
    entries: Optional[List[float]] = None  # generator entries for kind=diagonal


class FastOperatorConfig(_Strict):
    kappa: float = Field(2.0, gt=0)
    modes: int = Field(16, gt=0)
    eigenvalues: Optional[List[float]] = None
    entries: Optional[List[float]] = None  # overrides -kappa * lambda_k


class NonlinearityConfig(_Strict):
    kind: str = "zero"
    params: Dict[str, Any] = Field(default_factory=dict)
    lipschitz: Optional[float] = Field(None, ge=0)


class CovarianceConfig(_Strict):
    scale: float = Field(1.0, gt=0)
    decay: float = Field(2.0, ge=0)  # k_i = scale * i^-decay
    variances: Optional[List[float]] = None


class InitialConfig(_Strict):
    x: Optional[List[float]] = None
    y: Optional[List[float]] = None
    amplitude: float = 1.0  # default x0 = amplitude / i on the leading coefficients, y0 = 0


class SystemConfig(_Strict):
    slow: SlowOperatorConfig = Field(default_factory=SlowOperatorConfig)
    fast: FastOperatorConfig = Field(default_factory=FastOperatorConfig)
    F: NonlinearityConfig = Field(default_factory=NonlinearityConfig)
    G: NonlinearityConfig = Field(default_factory=NonlinearityConfig)
    sigma1: float
    sigma2: float
    cov1: CovarianceConfig = Field(default_factory=CovarianceConfig)
    cov2: CovarianceConfig = Field(default_factory=CovarianceConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)


class ScalesConfig(_Strict):
    epsilon: Union[float, List[float]] = 0.05
    mu: Union[float, Literal["auto"]] = "auto"
    gamma1: Union[float, Literal["auto"]] = "auto"
    lipschitz: Optional[float] = Field(None, ge=0)  # default: max of the F and G constants
    horizon: float = Field(1.0, gt=0)
    oversample_fast: int = Field(10, gt=0)

    @field_validator("epsilon")
    @classmethod
    def _positive_epsilon(cls, v: Union[float, List[float]]) -> Union[float, List[float]]:
        values = v if isinstance(v, list) else [v]
        if not values or any(e <= 0 for e in values):
            raise ValueError("epsilon values must be positive")
        return v

    @property
    def epsilons(self) -> List[float]:
        return list(self.epsilon) if isinstance(self.epsilon, list) else [self.epsilon]


class ManifoldConfig(_Strict):
    tol: float = Field(1e-8, gt=0, lt=1)
    t_back: Union[float, Literal["auto"]] = "auto"
    max_iterations: int = Field(200, gt=0)
    reduced_initial: Literal["manifold", "tracking"] = "manifold"
    lipschitz_probes: int = Field(200, gt=0)
    tracking_horizon: Union[float, Literal["auto"]] = "auto"  # default 10 eps / mu


class ObservationConfig(_Strict):
    kind: str = "sine-of-slow"
    params: Dict[str, Any] = Field(default_factory=dict)
    c_h: Optional[float] = Field(None, ge=0)
    h_lip: Optional[float] = Field(None, ge=0)


class FilterConfig(_Strict):
    h: ObservationConfig = Field(default_factory=ObservationConfig)
    dim3: int = Field(8, gt=0)
    particles: int = Field(2000, ge=2)
    coarsen: int = Field(5, gt=0)
    p: float = Field(3.0, gt=0)
    dictionary_size: int = Field(16, ge=8)
    times: Optional[List[float]] = None  # default: [horizon]
    chunk_size: int = Field(256, gt=0)
    mc_samples: int = Field(10_000, ge=2)
    mc_inner: int = Field(100, ge=1)
    martingale_mode: Literal["full", "reduced"] = "full"


class RunConfig(_Strict):
    seed: int = Field(0, ge=0)
    replications: int = Field(1, gt=0)
    output_dir: Optional[str] = None
    threads: Optional[int] = Field(None, gt=0)


class ScenarioConfig(_Strict):
    name: str = "custom"
    description: str = ""
    system: SystemConfig
    scales: ScalesConfig = Field(default_factory=ScalesConfig)
    manifold: ManifoldConfig = Field(default_factory=ManifoldConfig)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def _times_inside_horizon(self) -> "ScenarioConfig":
        for t in self.filter.times or []:
            if not 0 < t <= self.scales.horizon:
                raise ValueError(f"filter time {t} outside (0, horizon={self.scales.horizon}]")
        return self


# Reports
class HypothesisVerdict(BaseModel):
    name: str
    passed: bool
    message: str
    details: Dict[str, Any] = Field(default_factory=dict)


class HypothesisReport(BaseModel):
    passed: bool
    verdicts: List[HypothesisVerdict]
    gamma1: float
    gamma2: float
    lipschitz: float
    mu: float
    epsilon: float
    epsilon0: Optional[float]  # None means unconstrained
    contraction_constant: Optional[float]
    mu_window: Tuple[float, float]
    norm_used: str

    def verdict(self, name: str) -> HypothesisVerdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)


class VerificationReport(BaseModel):
    name: str
    passed: Optional[bool]  # None when only raw numbers are reported
    discrepancy: float
    tolerance: float
    details: Dict[str, Any] = Field(default_factory=dict)


class CertificateReport(BaseModel):
    epsilon: float
    mu: float
    epsilon0: Optional[float]
    contraction_constant: float
    lip_bound: float
    lip_empirical: float
    lip_certified: bool
    random_bound: float
    random_bound_components: Tuple[float, float]
    envelope_passed: Optional[bool] = None
    envelope_min_margin: Optional[float] = None
    decay_slope: Optional[float] = None
    tracking_iterations: Optional[int] = None


class MartingaleReport(BaseModel):
    passed: bool
    mode: str
    p: float
    horizon: float
    samples: int
    gamma_mean: float
    gamma_se: float
    inverse_moment: float
    inverse_moment_se: float
    inverse_moment_bound: float


class RunManifest(BaseModel):
    command: str
    scenario: str
    config_hash: str
    code_version: str
    seed: int
    threads: int
    derived: Dict[str, Any] = Field(default_factory=dict)
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: List[str] = Field(default_factory=list)
