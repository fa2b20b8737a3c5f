import json
import logging

import numpy as np
import pytest
from click.testing import CliRunner

from app.core.errors import EXIT_INTERNAL
from app.main import cli
from app.services.experiment_service import ExperimentService


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(autouse=True)
def detach_cli_logging():
    yield
    root = logging.getLogger("app")
    root.handlers.clear()
    root.propagate = True


def _write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "1.0.0" in result.output


def test_local_normal_form(runner, tmp_path):
    out = tmp_path / "nf"
    result = runner.invoke(cli, ["nf", "--input", "H2+u3", "--order", "6", "--mode", "local", "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    for name in ("normal_form.txt", "generators.txt", "nf.json", "manifest.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "nf.json").read_text())
    assert report["mode"] == "local"
    assert report["replay_exact"] is True
    assert report["invariant_coefficients"] == {}
    assert json.loads(result.stdout)["mode"] == "local"


def test_semiglobal_normal_form_reports_w4(runner, tmp_path):
    out = tmp_path / "nf"
    result = runner.invoke(cli, ["nf", "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "nf.json").read_text())
    assert report["invariant_coefficients"]["w4"] == "-15/32"
    assert (out / "generators.txt").read_text().startswith("zero: 1/2 * t^0 * s^(-1/2) * u^2 v^1")


def test_spectrum_command(runner, tmp_path):
    out = tmp_path / "spectrum"
    result = runner.invoke(cli, ["spectrum", "--lambda-max", "1000", "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "weyl.json").read_text())
    assert report["weyl"]["lambda_hi"] == 1000.0
    assert abs(report["weyl"]["exponent"] - 2.0) < 0.05
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "eigenvalue,sector_kind,l,m,j,k,multiplicity"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"spectrum.csv", "weyl.json"}
    assert manifest["inputs"]["parameters"]["lambda_max"] == 1000.0


def test_runs_are_byte_reproducible(runner, tmp_path):
    for name in ("a", "b"):
        result = runner.invoke(cli, ["spectrum", "--lambda-max", "500", "--output-dir", str(tmp_path / name)])
        assert result.exit_code == 0, result.output
    for name in ("spectrum.csv", "weyl.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_heat_karamata(runner, tmp_path):
    out = tmp_path / "heat"
    result = runner.invoke(cli, ["heat", "--experiment", "karamata", "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "trace.csv").exists()
    assert not (out / "kernel.json").exists()
    report = json.loads((out / "karamata.json").read_text())
    assert report["warning"] is None
    assert abs(report["weyl_constant"] - 1.2337) < 0.02


def test_flow_against_flat_oracle(runner, tmp_path):
    out = tmp_path / "flow"
    result = runner.invoke(cli, ["flow", "--time", "2", "--dt", "0.001", "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "flow.json").read_text())
    assert report["oracle_error"] < 1e-8
    assert report["truncated"] is False
    assert (out / "trajectory.csv").read_text().startswith("t,x,y,z,p_x,p_y,p_z,gstar,I\n")


def test_run_with_config_file(runner, tmp_path):
    out = tmp_path / "from-config"
    config = _write_config(
        tmp_path, {"experiment": "nf", "parameters": {"mode": "local"}, "output_dir": str(out)}
    )
    result = runner.invoke(cli, ["run", config])
    assert result.exit_code == 0, result.output
    assert json.loads((out / "nf.json").read_text())["mode"] == "local"


def test_weyl_reports_density_comparison(runner, tmp_path):
    out = tmp_path / "weyl"
    config = _write_config(tmp_path, {"experiment": "weyl", "parameters": {"points": 12}})
    args = ["weyl", "--config", config, "--lambda-lo", "4", "--lambda-hi", "12", "--n-grid", "16", "--output-dir", str(out)]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    report = json.loads((out / "weyl.json").read_text())
    assert report["density"]["popp"]["constant"] == report["fit"]["constant"]
    assert report["density"]["relative_gap"] >= 0.0


def test_unknown_parameter_exits_with_invalid_input(runner, tmp_path):
    out = tmp_path / "bad"
    config = _write_config(tmp_path, {"experiment": "nf", "parameters": {"bogus": 1}})
    result = runner.invoke(cli, ["nf", "--config", config, "--output-dir", str(out)])
    assert result.exit_code == 2
    error = json.loads((out / "error.json").read_text())
    assert error["error"] == "ValidationError"
    assert error["exit_code"] == 2


def test_config_for_another_experiment(runner, tmp_path):
    out = tmp_path / "bad"
    config = _write_config(tmp_path, {"experiment": "nf"})
    result = runner.invoke(cli, ["spectrum", "--config", config, "--output-dir", str(out)])
    assert result.exit_code == 2
    assert json.loads((out / "error.json").read_text())["error"] == "ConfigurationError"


def test_unreadable_config(runner, tmp_path):
    result = runner.invoke(cli, ["run", str(tmp_path / "missing.json"), "--output-dir", str(tmp_path / "bad")])
    assert result.exit_code == 2


def test_numeric_failure_exits_with_three(runner, tmp_path):
    out = tmp_path / "heat"
    config = _write_config(
        tmp_path,
        {"experiment": "heat", "parameters": {"experiment": "kernel", "kernel_points": [[0.0, 0.0, 1000.0, 1.0]]}},
    )
    result = runner.invoke(cli, ["heat", "--config", config, "--output-dir", str(out)])
    assert result.exit_code == 3
    error = json.loads((out / "error.json").read_text())
    assert error["error"] == "ResolutionError"
    assert error["context"]["max_frequency"] == 400.0


def test_unexpected_failure_is_reported(runner, tmp_path, monkeypatch):
    def broken(self):
        raise np.linalg.LinAlgError("eigenvalues did not converge")

    monkeypatch.setattr(ExperimentService, "run_spectrum", broken)
    out = tmp_path / "spectrum"
    result = runner.invoke(cli, ["spectrum", "--lambda-max", "100", "--output-dir", str(out)])
    assert result.exit_code == EXIT_INTERNAL
    assert not isinstance(result.exception, np.linalg.LinAlgError)
    error = json.loads((out / "error.json").read_text())
    assert error["error"] == "LinAlgError"
    assert error["exit_code"] == EXIT_INTERNAL
    assert error["context"] == {"experiment": "spectrum"}


def test_invalid_override_is_not_an_internal_failure(runner, tmp_path):
    result = runner.invoke(cli, ["weyl", "--n-grid", "-3", "--output-dir", str(tmp_path / "weyl")])
    assert result.exit_code == 2
