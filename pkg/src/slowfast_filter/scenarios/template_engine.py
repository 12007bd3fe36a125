"""
Scenario Template Engine - turns YAML scenario files and catalog entries into runnable models
"""
import copy
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from ..errors import AdmissibilityError, ConfigError, SlowFastError
from ..filtering.metrics import TestDictionary, build_default_dictionary
from ..filtering.observation import ObservationModel, build_observation
from ..models import CovarianceConfig, ScenarioConfig
from ..noise.paths import CovarianceSpec
from ..simulation.integrator import SystemModel
from ..spectral.hypotheses import (
    SystemParams,
    auto_gamma1,
    backward_horizon,
    compute_contraction_constant,
    compute_epsilon0,
    default_mu,
    manifold_lipschitz_bound,
)
from ..spectral.nonlinearities import build_nonlinearity
from ..spectral.operators import SpaceSpec, SpectralOperator
from .catalog import SCENARIO_CATALOG

logger = logging.getLogger(__name__)

# Leading slow coefficients that receive amplitude / i in the default initial state
DEFAULT_INITIAL_COEFFICIENTS = 4


def _node_line(root: Optional[yaml.Node], loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest YAML node reachable along a pydantic error location"""
    if root is None:
        return None
    node = root
    for part in loc:
        child = None
        if isinstance(node, yaml.MappingNode):
            child = next((v for k, v in node.value if getattr(k, "value", None) == str(part)), None)
            if child is None:
                # missing keys are reported at their parent mapping
                break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and 0 <= part < len(node.value):
            child = node.value[part]
        else:
            break
        node = child
    return node.start_mark.line + 1


class ScenarioTemplateEngine:
    """Parses scenario configs and builds the operators, couplings and observation they describe"""

    def list_scenarios(self) -> Dict[str, str]:
        return {name: entry["description"] for name, entry in SCENARIO_CATALOG.items()}

    def catalog_entry(self, name: str) -> Dict[str, Any]:
        if name not in SCENARIO_CATALOG:
            raise ConfigError(f"Unknown scenario: {name} (known: {', '.join(SCENARIO_CATALOG)})")
        return copy.deepcopy(SCENARIO_CATALOG[name]["config"])

    def from_catalog(self, name: str) -> ScenarioConfig:
        return self.parse_config(yaml.safe_dump(self.catalog_entry(name), sort_keys=False), source=f"catalog:{name}")

    def render_template(self, name: str) -> str:
        """YAML text of a catalog scenario with every default spelled out"""
        config = self.from_catalog(name)
        header = f"# {SCENARIO_CATALOG[name]['description']}\n"
        for note in SCENARIO_CATALOG[name].get("notes", []):
            header += f"# {note}\n"
        return header + yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)

    def load_config(self, path: Union[str, Path]) -> ScenarioConfig:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"Cannot read scenario file {path}: {e}") from e
        return self.parse_config(text, source=str(path))

    def parse_config(self, text: str, source: str = "<string>") -> ScenarioConfig:
        """YAML text -> validated ScenarioConfig; errors carry the dotted field and the line"""
        try:
            raw = yaml.safe_load(text)
            root = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError(f"{source}: invalid YAML: {getattr(e, 'problem', e)}", line=None if mark is None else mark.line + 1) from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: a scenario must be a mapping at the top level", line=1)
        try:
            return ScenarioConfig.model_validate(raw)
        except ValidationError as e:
            problems = e.errors()
            first = problems[0]
            field = ".".join(str(p) for p in first["loc"])
            details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in problems)
            logger.debug(f"{source}: {len(problems)} validation errors")
            raise ConfigError(f"{source}: {details}", field=field, line=_node_line(root, first["loc"])) from e

    def validate_config(self, raw: Dict[str, Any]) -> Dict[str, Any]:
        """Validate a scenario mapping without raising"""
        errors: List[str] = []
        warnings: List[str] = []
        try:
            config = ScenarioConfig.model_validate(raw)
        except ValidationError as e:
            errors.extend(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
            return {"valid": False, "errors": errors, "warnings": warnings}

        try:
            derived = self.derived_constants(config)
        except SlowFastError as e:
            errors.append(str(e))
            return {"valid": False, "errors": errors, "warnings": warnings}

        eps0 = derived["epsilon0"]
        for row in derived["per_epsilon"]:
            if eps0 is not None and row["epsilon"] >= eps0:
                errors.append(f"epsilon {row['epsilon']:g} is not below eps0 = {eps0:.6g}")
        if derived["gamma2"] <= derived["lipschitz"]:
            errors.append(f"gamma2 = {derived['gamma2']:g} must exceed L = {derived['lipschitz']:g}")
        if config.system.sigma1 == 0 and config.system.sigma2 == 0:
            warnings.append("both noise intensities are zero; the system is deterministic")
        if config.filter.particles < 100:
            warnings.append(f"{config.filter.particles} particles give coarse filter estimates")
        if config.filter.mc_samples // config.filter.mc_inner < 2:
            errors.append("filter.mc_samples must hold at least two groups of filter.mc_inner")
        return {"valid": len(errors) == 0, "errors": errors, "warnings": warnings}

    def build_operators(self, config: ScenarioConfig) -> Tuple[SpectralOperator, SpectralOperator, List[float]]:
        """Slow and fast generators, plus the slow eigenvalue ladder"""
        slow, fast = config.system.slow, config.system.fast
        eigenvalues = slow.eigenvalues or [float(k * k) for k in range(1, slow.modes + 1)]
        if len(eigenvalues) != slow.modes:
            raise ConfigError(f"{len(eigenvalues)} eigenvalues for {slow.modes} modes", field="system.slow.eigenvalues")
        if slow.kind == "wave":
            a = SpectralOperator.wave("slow", eigenvalues, slow.damping)
        else:
            if slow.entries is None or len(slow.entries) != slow.modes:
                raise ConfigError("a diagonal slow operator needs one entry per mode", field="system.slow.entries")
            a = SpectralOperator.diagonal("slow", slow.entries)

        if fast.entries is not None:
            entries = list(fast.entries)
        else:
            fast_lam = fast.eigenvalues or [float(k * k) for k in range(1, fast.modes + 1)]
            if len(fast_lam) != fast.modes:
                raise ConfigError(f"{len(fast_lam)} eigenvalues for {fast.modes} modes", field="system.fast.eigenvalues")
            entries = [-fast.kappa * lam for lam in fast_lam]
        if len(entries) != fast.modes:
            raise ConfigError(f"{len(entries)} fast entries for {fast.modes} modes", field="system.fast.entries")
        return a, SpectralOperator.diagonal("fast", entries), eigenvalues

    def _covariance(self, cov: CovarianceConfig, space: SpaceSpec, field: str) -> CovarianceSpec:
        if cov.variances is None:
            return CovarianceSpec.power_law(space, cov.scale, cov.decay)
        if len(cov.variances) != space.dim:
            raise ConfigError(f"{len(cov.variances)} variances for {space.dim} coefficients", field=f"{field}.variances")
        return CovarianceSpec(np.asarray(cov.variances, dtype=float))

    def build_observation(self, config: ScenarioConfig, slow_space: SpaceSpec, fast_space: SpaceSpec) -> ObservationModel:
        h = config.filter.h
        return build_observation(h.kind, slow_space, fast_space, config.filter.dim3, h.params, h.c_h, h.h_lip)

    def build_system(self, config: ScenarioConfig, epsilon: Optional[float] = None) -> SystemModel:
        """SystemModel at one epsilon (default: the first listed), with derived gamma1, gamma2, L and mu"""
        system, scales = config.system, config.scales
        a, b, eigenvalues = self.build_operators(config)
        couplings = []
        for label, target, nl in (("F", "slow", system.F), ("G", "fast", system.G)):
            params = dict(nl.params)
            if nl.kind == "thermoelastic-coupling":
                params.setdefault("eigenvalues", eigenvalues)
            try:
                couplings.append(build_nonlinearity(nl.kind, a.space, b.space, target, params, nl.lipschitz))
            except SlowFastError as e:
                raise ConfigError(str(e), field=f"system.{label}") from e
        f, g = couplings

        gamma2 = float(np.min(-b.diagonal_entries))
        lipschitz = scales.lipschitz if scales.lipschitz is not None else max(f.declared_lipschitz, g.declared_lipschitz)
        gamma1 = auto_gamma1(a) if scales.gamma1 == "auto" else float(scales.gamma1)
        mu = default_mu(gamma2, lipschitz) if scales.mu == "auto" else float(scales.mu)
        obs = self.build_observation(config, a.space, b.space)
        eps = scales.epsilons[0] if epsilon is None else float(epsilon)
        params = SystemParams(
            epsilon=eps,
            sigma1=system.sigma1,
            sigma2=system.sigma2,
            gamma1=gamma1,
            gamma2=gamma2,
            lipschitz=lipschitz,
            mu=mu,
            horizon=scales.horizon,
            c_h=obs.c_h,
            h_lip=obs.h_lip,
        )
        cov1 = self._covariance(system.cov1, a.space, "system.cov1")
        cov2 = self._covariance(system.cov2, b.space, "system.cov2")
        model = SystemModel(a, b, f, g, params, cov1, cov2, scales.oversample_fast, config.name)
        logger.debug(f"Built {config.name} at eps={eps:g}: gamma1={gamma1:g}, gamma2={gamma2:g}, L={lipschitz:g}, mu={mu:g}")
        return model

    def initial_state(self, config: ScenarioConfig, model: SystemModel) -> Tuple[np.ndarray, np.ndarray]:
        init = config.system.initial
        if init.x is not None:
            if len(init.x) != model.slow_dim:
                raise ConfigError(f"{len(init.x)} slow initial values for dimension {model.slow_dim}", field="system.initial.x")
            x0 = np.asarray(init.x, dtype=float)
        else:
            x0 = np.zeros(model.slow_dim)
            n = min(DEFAULT_INITIAL_COEFFICIENTS, model.slow_dim)
            x0[:n] = init.amplitude / np.arange(1, n + 1)
        if init.y is not None:
            if len(init.y) != model.fast_dim:
                raise ConfigError(f"{len(init.y)} fast initial values for dimension {model.fast_dim}", field="system.initial.y")
            y0 = np.asarray(init.y, dtype=float)
        else:
            y0 = np.zeros(model.fast_dim)
        return x0, y0

    def build_dictionary(self, config: ScenarioConfig, model: SystemModel) -> TestDictionary:
        return build_default_dictionary(model.a.space, size=config.filter.dictionary_size)

    def t_back(self, config: ScenarioConfig) -> Optional[float]:
        t_back = config.manifold.t_back
        return None if t_back == "auto" else float(t_back)

    def derived_constants(self, config: ScenarioConfig) -> Dict[str, Any]:
        """Everything the manifest records about the scales, recomputed from the config alone"""
        model = self.build_system(config)
        p = model.params
        try:
            eps0: Optional[float] = compute_epsilon0(p)
        except AdmissibilityError:
            eps0 = None
        rows = []
        for eps in config.scales.epsilons:
            q = p.with_epsilon(eps)
            row: Dict[str, Any] = {"epsilon": eps, "dt": eps / config.scales.oversample_fast}
            try:
                row["contraction_constant"] = compute_contraction_constant(q)
                row["t_back"] = self.t_back(config) or backward_horizon(q, config.manifold.tol)
                row["lip_bound"] = manifold_lipschitz_bound(q)
            except AdmissibilityError as e:
                row.setdefault("contraction_constant", None)
                row["error"] = str(e)
            rows.append(row)
        return {
            "gamma1": p.gamma1,
            "gamma2": p.gamma2,
            "lipschitz": p.lipschitz,
            "mu": p.mu,
            "mu_window": list(p.mu_window),
            "epsilon0": None if eps0 is None or math.isinf(eps0) else eps0,
            "c_h": p.c_h,
            "h_lip": p.h_lip,
            "per_epsilon": rows,
        }
