"""
Command-line interface for the slow-fast filter toolkit
"""
import functools
import logging
import os
import sys
from typing import Any, Callable, Optional

import click
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from .errors import (
    AdmissibilityError,
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    DivergenceError,
)
from .models import ScenarioConfig
from .runner import ExperimentRunner
from .scenarios import ScenarioTemplateEngine

# Configure logging
logging.basicConfig(
    level=os.getenv("LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_HYPOTHESIS = 2
EXIT_NUMERICAL = 3
EXIT_DEGENERACY = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, DegeneracyError):
        return EXIT_DEGENERACY
    if isinstance(error, (DivergenceError, ConvergenceError, AdmissibilityError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def load_scenario(config_path: Optional[str], scenario: Optional[str]) -> ScenarioConfig:
    engine = ScenarioTemplateEngine()
    if config_path and scenario:
        raise ConfigError("use either --config or --scenario, not both")
    if config_path:
        return engine.load_config(config_path)
    return engine.from_catalog(scenario or "thermoelastic")


def scenario_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Scenario YAML file")
    @click.option("--scenario", help="Built-in scenario name (default: thermoelastic)")
    @click.option("--seed", type=click.IntRange(min=0), help="Master seed (overrides run.seed)")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory (default: $SLOWFAST_OUTPUT_DIR or runs)")
    @click.option("--threads", type=click.IntRange(min=1), help="Worker threads (default: $SLOWFAST_THREADS or 1)")
    @functools.wraps(fn)
    def wrapper(config_path: Optional[str], scenario: Optional[str], seed: Optional[int], out_dir: Optional[str], threads: Optional[int]) -> None:
        try:
            config = load_scenario(config_path, scenario)
            runner = ExperimentRunner(config, out_dir=out_dir, seed=seed, threads=threads)
            code = fn(runner)
        except Exception as e:
            code = exit_code_for(e)
            logger.error(f"{fn.__name__} failed: {e}")
        sys.exit(code)

    return wrapper


def _gate(runner: ExperimentRunner) -> bool:
    passed, reports = runner.check(write=False)
    if not passed:
        for report in reports:
            for verdict in report.verdicts:
                if not verdict.passed:
                    logger.error(f"eps={report.epsilon:g} {verdict.name}: {verdict.message}")
    return passed


@click.group()
def cli() -> None:
    """Slow-fast SPDE simulation, invariant-manifold reduction and particle filtering"""
    pass


@cli.command()
@scenario_options
def check(runner: ExperimentRunner) -> int:
    """Check hypotheses H1-H5 at every configured epsilon"""
    passed, reports = runner.check()
    for report in reports:
        click.echo(f"eps={report.epsilon:g}: {'pass' if report.passed else 'FAIL'} (gamma2={report.gamma2:g}, eps0={report.epsilon0}, mu={report.mu:.4g})")
    click.echo(f"Report written to {runner.artifacts.out_dir}")
    return EXIT_OK if passed else EXIT_HYPOTHESIS


@cli.command()
@scenario_options
def simulate(runner: ExperimentRunner) -> int:
    """Full and reduced trajectories, gap decay and manifold certificates"""
    if not _gate(runner):
        return EXIT_HYPOTHESIS
    for result in runner.simulate():
        cert = result["certificate"]
        click.echo(
            f"eps={result['epsilon']:g}: gap slope {result['gap_slope']:.4g}, tracking slope {cert.decay_slope:.4g}, "
            f"envelope {'held' if cert.envelope_passed else 'VIOLATED'}, Lipschitz {cert.lip_empirical:.4g} <= {cert.lip_bound:.4g}"
        )
    return EXIT_OK


@cli.command(name="filter")
@scenario_options
def filter_command(runner: ExperimentRunner) -> int:
    """Epsilon-scaling experiment for full vs reduced filters plus the inverse-moment check"""
    if not _gate(runner):
        return EXIT_HYPOTHESIS
    result = runner.filter()
    scaling, martingale = result["scaling"], result["martingale"]
    click.echo(scaling.table.to_string(index=False))
    click.echo(f"exponent: {scaling.exponent}; martingale check: {'pass' if martingale.passed else 'FAIL'}")
    return EXIT_OK


@cli.command()
@click.argument("name", required=False)
def template(name: Optional[str]) -> None:
    """Print a built-in scenario as YAML, or list the available scenarios"""
    engine = ScenarioTemplateEngine()
    try:
        if name is None:
            for key, description in engine.list_scenarios().items():
                click.echo(f"{key}: {description}")
            return
        click.echo(engine.render_template(name), nl=False)
    except ConfigError as e:
        logger.error(str(e))
        sys.exit(EXIT_CONFIG)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
