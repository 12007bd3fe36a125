"""
Scale parameters, contraction constants and the hypothesis checker
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np
import scipy.linalg

from ..errors import AdmissibilityError, DomainError
from ..models import HypothesisReport, HypothesisVerdict
from .nonlinearities import Nonlinearity, lipschitz_probe, zero_anchor_holds
from .operators import SpaceSpec, SpectralOperator

logger = logging.getLogger(__name__)

# Relative slack for floating-point comparisons in verdicts
_REL = 1e-9


class ObservationLike(Protocol):
    c_h: float
    h_lip: float
    dim3: int

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SystemParams:
    """Scale ratio, noise intensities, decay rates and the observation bounds of one model"""

    epsilon: float
    sigma1: float
    sigma2: float
    gamma1: float
    gamma2: float
    lipschitz: float
    mu: float
    horizon: float = 1.0
    c_h: float = 0.0
    h_lip: float = 0.0

    def __post_init__(self) -> None:
        for name in ("epsilon", "sigma1", "sigma2", "gamma1", "gamma2", "lipschitz", "mu", "horizon", "c_h", "h_lip"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"SystemParams.{name} must be finite")
        if self.epsilon <= 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.gamma1 < 0 or self.gamma2 <= 0:
            raise DomainError(f"need gamma1 >= 0 and gamma2 > 0, got {self.gamma1}, {self.gamma2}")
        if self.lipschitz < 0 or self.horizon <= 0:
            raise DomainError("lipschitz must be >= 0 and horizon > 0")

    def with_epsilon(self, epsilon: float) -> "SystemParams":
        return replace(self, epsilon=epsilon)

    @property
    def mu_window(self) -> Tuple[float, float]:
        return (0.0, self.gamma2 - self.lipschitz)


def default_mu(gamma2: float, lipschitz: float) -> float:
    """Midpoint of the admissible window (0, gamma2 - L)"""
    return (gamma2 - lipschitz) / 2.0


def compute_contraction_constant(p: SystemParams) -> float:
    """M = eps L / (mu - eps gamma1) + L / (gamma2 - mu)"""
    gap = p.mu - p.epsilon * p.gamma1
    if gap <= 0:
        raise AdmissibilityError(f"fast-slow gap violated at this epsilon: mu - eps*gamma1 = {gap:g} <= 0")
    if p.mu >= p.gamma2:
        raise AdmissibilityError(f"mu = {p.mu:g} must be below gamma2 = {p.gamma2:g}")
    return p.epsilon * p.lipschitz / gap + p.lipschitz / (p.gamma2 - p.mu)


def weighted_contraction_constant(p: SystemParams, rate: float) -> float:
    """Contraction constant of the backward operator in the sup norm weighted by e^{rate (t - s)}.

    rate = mu / eps gives compute_contraction_constant.
    """
    if rate <= p.gamma1 or p.epsilon * rate >= p.gamma2:
        return math.inf
    return p.lipschitz / (rate - p.gamma1) + p.lipschitz / (p.gamma2 - p.epsilon * rate)


def compute_epsilon0(p: SystemParams) -> float:
    """Supremum of eps with M(eps) < 1: c mu / (L + c gamma1), c = 1 - L / (gamma2 - mu). Infinite when unconstrained."""
    if not 0 < p.mu < p.gamma2 - p.lipschitz:
        raise AdmissibilityError(f"mu = {p.mu:g} outside the admissible window (0, {p.gamma2 - p.lipschitz:g})")
    c = 1.0 - p.lipschitz / (p.gamma2 - p.mu)
    denominator = p.lipschitz + c * p.gamma1
    if denominator == 0:
        return math.inf
    return c * p.mu / denominator


def backward_horizon(p: SystemParams, tol: float) -> float:
    """Truncation length for (-inf, s]: (eps / (gamma2 - mu)) ln(1 / tol)"""
    if not 0 < tol < 1:
        raise DomainError(f"tolerance must lie in (0, 1), got {tol}")
    return p.epsilon / (p.gamma2 - p.mu) * math.log(1.0 / tol)


def manifold_lipschitz_bound(p: SystemParams) -> float:
    """L / ((gamma2 - mu)(1 - M)) for the manifold graph at s = 0"""
    m = compute_contraction_constant(p)
    if m >= 1:
        raise AdmissibilityError(f"contraction constant M = {m:.4f} >= 1")
    return p.lipschitz / ((p.gamma2 - p.mu) * (1.0 - m))


def auto_gamma1(a: SpectralOperator) -> float:
    """Smallest gamma1 >= 0 with ||e^{At}|| <= e^{-gamma1 t} for t <= 0 in the Euclidean norm (log-norm of -A)"""
    return max(0.0, (a.scaled(-1.0)).log_norm())


def _lyapunov_factors(a: SpectralOperator) -> Tuple[np.ndarray, np.ndarray]:
    """Per-pair Cholesky factor R of P solving M^T P + P M = -I, and its inverse. ||v||_P = ||R v||."""
    pairs = a.generator.pairs
    r = np.empty_like(pairs)
    r_inv = np.empty_like(pairs)
    for k, m in enumerate(pairs):
        p_mat = scipy.linalg.solve_continuous_lyapunov(m.T, -np.eye(2))
        p_mat = 0.5 * (p_mat + p_mat.T)
        r[k] = scipy.linalg.cholesky(p_mat, lower=False)
        r_inv[k] = np.linalg.inv(r[k])
    return r, r_inv


def _semigroup_norm(a: SpectralOperator, t: float, factors: Optional[Tuple[np.ndarray, np.ndarray]]) -> float:
    e = a.exp(t)
    if factors is None:
        return e.norm()
    r, r_inv = factors
    parts = [0.0]
    if e.scalars.size:
        parts.append(float(np.max(np.abs(e.scalars))))
    if e.pairs.size:
        transformed = np.matmul(np.matmul(r, e.pairs), r_inv)
        parts.append(float(np.max(np.linalg.norm(transformed, ord=2, axis=(1, 2)))))
    return max(parts)


def _check_h1(a: SpectralOperator, gamma1: float, t_max: float) -> Tuple[HypothesisVerdict, str]:
    neg = -np.logspace(-3, math.log10(t_max), 40)
    pos = np.linspace(0.0, t_max, 41)[1:]

    def worst(factors: Optional[Tuple[np.ndarray, np.ndarray]]) -> Tuple[float, float]:
        back = max(_semigroup_norm(a, float(t), factors) / math.exp(-gamma1 * float(t)) for t in neg)
        fwd = max(_semigroup_norm(a, float(t), factors) for t in pos)
        return back, fwd

    back, fwd = worst(None)
    norm_used = "euclidean"
    if back > 1 + _REL or fwd > 1 + _REL:
        try:
            back, fwd = worst(_lyapunov_factors(a))
            norm_used = "lyapunov"
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.debug(f"Lyapunov norm unavailable: {e}")
    passed = back <= 1 + _REL and fwd <= 1 + _REL
    message = f"sup_t<=0 ||e^(At)|| e^(gamma1 t) = {back:.6f}, sup_t>=0 ||e^(At)|| = {fwd:.6f} ({norm_used} norm)"
    return HypothesisVerdict(name="H1", passed=passed, message=message, details={"backward": back, "forward": fwd, "norm": norm_used}), norm_used


def _check_h2(b: SpectralOperator, gamma2: float) -> HypothesisVerdict:
    if not b.is_diagonal:
        return HypothesisVerdict(name="H2", passed=False, message="fast operator must be diagonal (1x1 blocks)")
    entries = b.diagonal_entries
    worst = float(np.max(entries))
    passed = bool(np.all(entries < 0)) and worst <= -gamma2 * (1 - _REL)
    message = f"max diagonal entry {worst:g} vs -gamma2 = {-gamma2:g}"
    return HypothesisVerdict(name="H2", passed=passed, message=message, details={"max_entry": worst})


def _check_h3(
    f: Nonlinearity, g: Nonlinearity, lipschitz: float, probes: int, radius: float, seed: int
) -> HypothesisVerdict:
    details: Dict[str, Any] = {}
    problems: List[str] = []
    for label, nl in (("F", f), ("G", g)):
        probe = lipschitz_probe(nl, nl.slow_space, nl.fast_space, probes=probes, radius=radius, seed=seed)
        details[label] = {**probe, "declared": nl.declared_lipschitz, "kind": nl.kind}
        if not zero_anchor_holds(nl):
            problems.append(f"{label}(0,0) != 0")
        if probe["max_ratio"] > nl.declared_lipschitz * (1 + 1e-6):
            problems.append(f"{label} probe ratio {probe['max_ratio']:.4g} exceeds declared {nl.declared_lipschitz:.4g}")
        # ||F(z)|| <= L ||z|| follows from the anchor and the Lipschitz bound
        if probe["max_growth"] > nl.declared_lipschitz * (1 + 1e-6):
            problems.append(f"{label} growth {probe['max_growth']:.4g} exceeds declared {nl.declared_lipschitz:.4g}")
        if nl.declared_lipschitz > lipschitz * (1 + _REL):
            problems.append(f"{label} declared {nl.declared_lipschitz:.4g} exceeds system L = {lipschitz:.4g}")
    message = "; ".join(problems) if problems else f"F, G Lipschitz within L = {lipschitz:.4g} on {probes} probes"
    return HypothesisVerdict(name="H3", passed=not problems, message=message, details=details)


def _check_h4(p: SystemParams) -> Tuple[HypothesisVerdict, Optional[float], Optional[float]]:
    details: Dict[str, Any] = {"gamma2": p.gamma2, "lipschitz": p.lipschitz, "mu": p.mu}
    if p.gamma2 <= p.lipschitz:
        return HypothesisVerdict(name="H4", passed=False, message=f"gamma2 = {p.gamma2:g} <= L = {p.lipschitz:g}", details=details), None, None
    try:
        eps0 = compute_epsilon0(p)
        m = compute_contraction_constant(p)
    except AdmissibilityError as e:
        return HypothesisVerdict(name="H4", passed=False, message=str(e), details=details), None, None
    details.update({"epsilon0": None if math.isinf(eps0) else eps0, "contraction_constant": m})
    passed = p.epsilon < eps0 and m < 1
    if math.isinf(eps0):
        message = f"gamma2 > L; epsilon unconstrained; M = {m:.4f}"
    else:
        message = f"gamma2 > L; eps = {p.epsilon:g} {'<' if passed else '>='} eps0 = {eps0:.6g}; M = {m:.4f}"
    return HypothesisVerdict(name="H4", passed=passed, message=message, details=details), eps0, m


def _check_h5(h: ObservationLike, slow_space: SpaceSpec, fast_space: SpaceSpec, probes: int, radius: float, seed: int) -> HypothesisVerdict:
    probe = lipschitz_probe(h, slow_space, fast_space, probes=probes, radius=radius, seed=seed)
    problems = []
    if probe["max_norm"] > h.c_h * (1 + 1e-6):
        problems.append(f"sup ||h|| probe {probe['max_norm']:.4g} exceeds C_h = {h.c_h:.4g}")
    if probe["max_ratio"] > h.h_lip * (1 + 1e-6):
        problems.append(f"h Lipschitz probe {probe['max_ratio']:.4g} exceeds {h.h_lip:.4g}")
    message = "; ".join(problems) if problems else f"sup ||h|| <= C_h = {h.c_h:.4g}, Lip(h) <= {h.h_lip:.4g}"
    return HypothesisVerdict(name="H5", passed=not problems, message=message, details=probe)


def check_hypotheses(
    a: SpectralOperator,
    b: SpectralOperator,
    f: Nonlinearity,
    g: Nonlinearity,
    p: SystemParams,
    h: Optional[ObservationLike] = None,
    probes: int = 10_000,
    radius: float = 10.0,
    seed: int = 0,
    t_max: float = 10.0,
) -> HypothesisReport:
    """One verdict per hypothesis; failures are verdicts, never exceptions"""
    h1, norm_used = _check_h1(a, p.gamma1, t_max)
    verdicts = [h1, _check_h2(b, p.gamma2), _check_h3(f, g, p.lipschitz, probes, radius, seed)]
    h4, eps0, m = _check_h4(p)
    verdicts.append(h4)
    if h is not None:
        verdicts.append(_check_h5(h, a.space, b.space, probes, radius, seed))
    passed = all(v.passed for v in verdicts)
    for v in verdicts:
        if not v.passed:
            logger.warning(f"Hypothesis {v.name} failed: {v.message}")
    return HypothesisReport(
        passed=passed,
        verdicts=verdicts,
        gamma1=p.gamma1,
        gamma2=p.gamma2,
        lipschitz=p.lipschitz,
        mu=p.mu,
        epsilon=p.epsilon,
        epsilon0=None if eps0 is None or math.isinf(eps0) else eps0,
        contraction_constant=m,
        mu_window=p.mu_window,
        norm_used=norm_used,
    )
