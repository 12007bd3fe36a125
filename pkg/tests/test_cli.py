import json

import pytest
import yaml
from click.testing import CliRunner

from slowfast_filter.cli import EXIT_CONFIG, EXIT_DEGENERACY, EXIT_HYPOTHESIS, EXIT_NUMERICAL, cli, exit_code_for
from slowfast_filter.errors import ConfigError, ConvergenceError, DegeneracyError


@pytest.fixture
def runner(monkeypatch):
    monkeypatch.delenv("SLOWFAST_RECORD_DIR", raising=False)
    monkeypatch.delenv("SLOWFAST_THREADS", raising=False)
    return CliRunner()


def write_config(tmp_path, raw):
    target = tmp_path / f"{raw['name']}.yaml"
    target.write_text(yaml.safe_dump(raw))
    return target


def test_template_listing(runner):
    result = runner.invoke(cli, ["template"])
    assert result.exit_code == 0
    assert "thermoelastic:" in result.output
    assert "linear-gaussian:" in result.output


def test_template_dump_is_loadable(runner, engine):
    result = runner.invoke(cli, ["template", "decoupled"])
    assert result.exit_code == 0
    assert engine.parse_config(result.output) == engine.from_catalog("decoupled")


def test_unknown_template(runner):
    assert runner.invoke(cli, ["template", "bistable"]).exit_code == EXIT_CONFIG


def test_check_writes_manifest(runner, tmp_path):
    out = tmp_path / "check"
    result = runner.invoke(cli, ["check", "--scenario", "thermoelastic", "--out", str(out)])
    assert result.exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "check"
    assert manifest["scenario"] == "thermoelastic"
    assert "hypotheses.txt" in manifest["outputs"]
    assert (out / "hypotheses.txt").exists()
    assert manifest["derived"]["gamma2"] == pytest.approx(2.0)


def test_check_failure_exit_code(runner, engine, tmp_path):
    raw = yaml.safe_load(engine.render_template("thermoelastic"))
    raw["system"]["fast"]["kappa"] = 0.4
    config = write_config(tmp_path, raw)
    result = runner.invoke(cli, ["check", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_HYPOTHESIS
    assert "FAIL" in (tmp_path / "out" / "hypotheses.txt").read_text()


def test_simulate_refuses_failed_hypotheses(runner, engine, tmp_path):
    raw = yaml.safe_load(engine.render_template("decoupled"))
    raw["system"]["fast"]["kappa"] = 1e-3
    raw["system"]["F"] = {"kind": "thermoelastic-coupling", "params": {"amplitude": 0.5}}
    config = write_config(tmp_path, raw)
    result = runner.invoke(cli, ["simulate", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_HYPOTHESIS
    assert not (tmp_path / "out" / "trajectory_full_eps_0.05.csv").exists()


def test_config_errors_exit_one(runner, tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("system:\n  sigma1: 0.5\n")
    assert runner.invoke(cli, ["check", "--config", str(broken)]).exit_code == EXIT_CONFIG
    assert runner.invoke(cli, ["check", "--config", str(tmp_path / "absent.yaml")]).exit_code == EXIT_CONFIG
    both = runner.invoke(cli, ["check", "--config", str(broken), "--scenario", "decoupled"])
    assert both.exit_code == EXIT_CONFIG


def test_exit_code_mapping():
    assert exit_code_for(ConfigError("x")) == EXIT_CONFIG
    assert exit_code_for(ConvergenceError("x", [1.0])) == EXIT_NUMERICAL
    assert exit_code_for(DegeneracyError("x", 0.5)) == EXIT_DEGENERACY


@pytest.mark.slow
def test_simulate_is_reproducible(runner, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(cli, ["simulate", "--scenario", "decoupled", "--seed", "5", "--out", str(out)])
        assert result.exit_code == 0, result.output
        outputs.append(out)
    for csv in ("trajectory_full_eps_0.05.csv", "trajectory_reduced_eps_0.05.csv", "gap_eps_0.05.csv", "backward_eps_0.05.csv"):
        assert (outputs[0] / csv).read_bytes() == (outputs[1] / csv).read_bytes()
    manifest = json.loads((outputs[0] / "manifest.json").read_text())
    assert "records/truth_eps_0.05.sfrec" in manifest["outputs"]
    assert manifest["seed"] == 5


@pytest.mark.slow
def test_filter_command(runner, engine, tmp_path):
    raw = yaml.safe_load(engine.render_template("thermoelastic"))
    raw["system"]["slow"]["modes"] = 3
    raw["system"]["fast"]["modes"] = 3
    raw["scales"].update({"epsilon": [0.1, 0.05], "horizon": 0.2})
    raw["filter"].update(
        {"dim3": 2, "particles": 64, "coarsen": 2, "dictionary_size": 8, "mc_samples": 40, "mc_inner": 10, "times": [0.2]}
    )
    raw["run"]["replications"] = 2
    config = write_config(tmp_path, raw)
    out = tmp_path / "out"
    result = runner.invoke(cli, ["filter", "--config", str(config), "--out", str(out), "--threads", "2"])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "scaling_summary.json").read_text())
    assert summary["rows"][0]["p"] == 3.0
    assert (out / "scaling.csv").exists()
    assert (out / "filter_reduced_eps_0.05.csv").exists()
    assert json.loads((out / "martingale.json").read_text())["samples"] == 40
