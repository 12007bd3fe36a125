"""
Artifact Manager - writes CSV tables, JSON reports, text summaries and the run manifest
"""
import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import yaml
from jinja2 import Environment, StrictUndefined
from pydantic import BaseModel

from .models import RunManifest, ScenarioConfig

logger = logging.getLogger(__name__)

# Round-trip precision; equal floats always print identically
CSV_FLOAT_FORMAT = "%.17g"

_env = Environment(undefined=StrictUndefined, trim_blocks=True, lstrip_blocks=True)
_env.filters["num"] = lambda v, spec=".6g": "n/a" if v is None else format(v, spec)

REPORT_TEMPLATES = {
    "hypotheses": _env.from_string(
        """Hypothesis check: {{ 'PASS' if report.passed else 'FAIL' }} (eps = {{ report.epsilon | num }})
{% for v in report.verdicts %}
  [{{ 'ok' if v.passed else 'FAIL' }}] {{ v.name }}: {{ v.message }}
{% endfor %}
  gamma1 = {{ report.gamma1 | num }}, gamma2 = {{ report.gamma2 | num }}, L = {{ report.lipschitz | num }}
  mu = {{ report.mu | num }} in window ({{ report.mu_window[0] | num }}, {{ report.mu_window[1] | num }})
  eps0 = {{ report.epsilon0 | num }}, M = {{ report.contraction_constant | num }}, norm: {{ report.norm_used }}
"""
    ),
    "certificate": _env.from_string(
        """Manifold certificate at eps = {{ report.epsilon | num }}
  M = {{ report.contraction_constant | num('.4f') }}, eps0 = {{ report.epsilon0 | num }}
  Lipschitz: bound {{ report.lip_bound | num('.4f') }}, observed {{ report.lip_empirical | num('.4f') }}{{ '' if report.lip_certified else ' (not certified)' }}
  R(omega) = {{ report.random_bound | num('.4g') }}
{% if report.envelope_passed is not none %}
  attraction envelope: {{ 'held' if report.envelope_passed else 'VIOLATED' }} (min margin {{ report.envelope_min_margin | num('.3g') }})
{% endif %}
{% if report.decay_slope is not none %}
  gap decay slope {{ report.decay_slope | num('.4g') }} vs -mu/eps = {{ (-report.mu / report.epsilon) | num('.4g') }}
{% endif %}
"""
    ),
    "martingale": _env.from_string(
        """Martingale check ({{ report.mode }}, p = {{ report.p | num }}, T = {{ report.horizon | num }}): {{ 'PASS' if report.passed else 'FAIL' }}
  E[Gamma_T] = {{ report.gamma_mean | num('.5f') }} +- {{ report.gamma_se | num('.2g') }}
  E|rho_T(1)|^-p = {{ report.inverse_moment | num('.5g') }} +- {{ report.inverse_moment_se | num('.2g') }} (bound {{ report.inverse_moment_bound | num('.5g') }})
"""
    ),
    "scaling": _env.from_string(
        """Epsilon scaling (p = {{ p | num }}, {{ excluded }} runs excluded)
{% for row in rows %}
  eps = {{ row.epsilon | num }}  t = {{ row.t | num }}  E[d] = {{ row.mean_d | num('.4g') }} +- {{ row.se_d | num('.2g') }}
{% endfor %}
  fitted exponent: {{ exponent | num('.3f') }}; envelope c = {{ envelope_c | num('.4g') }}, R^2 = {{ envelope_r2 | num('.3f') }}
"""
    ),
}


def render_report(kind: str, **context: Any) -> str:
    template = REPORT_TEMPLATES.get(kind)
    if template is None:
        raise KeyError(f"Unknown report template: {kind}")
    return template.render(**context)


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of a validated config"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def code_version() -> str:
    try:
        return version("slowfast-filter")
    except PackageNotFoundError:
        from . import __version__

        return __version__


class ArtifactManager:
    """Owns one output directory and the manifest describing it"""

    def __init__(self, out_dir: Optional[Union[str, Path]] = None):
        self.out_dir = Path(out_dir or os.getenv("SLOWFAST_OUTPUT_DIR", "runs"))
        self.outputs: List[str] = []
        self.manifest: Optional[RunManifest] = None

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if name not in self.outputs:
            self.outputs.append(name)
        return self.out_dir / name

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        target = self._target(name)
        frame.to_csv(target, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"Wrote {target} ({len(frame)} rows)")
        return target

    def write_json(self, name: str, payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> Path:
        target = self._target(name)
        if isinstance(payload, BaseModel):
            target.write_text(payload.model_dump_json(indent=2))
        else:
            target.write_text(json.dumps(payload, indent=2, default=_jsonable))
        logger.info(f"Wrote {target}")
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self._target(name)
        target.write_text(text)
        return target

    def register(self, path: Path) -> None:
        """Add a file written outside this manager to the manifest inventory"""
        try:
            name = str(path.relative_to(self.out_dir))
        except ValueError:
            name = str(path)
        if name not in self.outputs:
            self.outputs.append(name)

    def start(self, command: str, config: ScenarioConfig, seed: int, threads: int, derived: Dict[str, Any]) -> RunManifest:
        self.manifest = RunManifest(
            command=command,
            scenario=config.name,
            config_hash=config_hash(config),
            code_version=code_version(),
            seed=seed,
            threads=threads,
            derived=derived,
            started_at=datetime.now(timezone.utc),
        )
        self.write_text("config.yaml", yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False))
        return self.manifest

    def finish(self) -> Path:
        """Write manifest.json listing every file produced in this run"""
        if self.manifest is None:
            raise RuntimeError("start() must be called before finish()")
        self.manifest.finished_at = datetime.now(timezone.utc)
        self.manifest.outputs = list(self.outputs)
        return self.write_json("manifest.json", self.manifest)


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)
