import importlib
import json
from pathlib import Path
from unittest.mock import patch

import click
import pytest
from click.testing import CliRunner

from cli import cli
from config import Config
from report import ExperimentReport, Verdict
from scenario import override_data, read_scenario_data, scenario_hash


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def bundled():
    """Path of a bundled scenario by name."""
    def path(name):
        return str(Config.SCENARIO_DIR / f"{name}.json")
    return path


def run_folder(out, name, horizon=None):
    data = override_data(read_scenario_data(Config.SCENARIO_DIR / f"{name}.json"), horizon=horizon)
    return Path(out) / scenario_hash(data)[:16]


class TestValidateCommand:
    """Test the validate command."""

    def test_default_scenario(self, runner):
        """The default scenario passes and prints its bounds."""
        result = runner.invoke(cli, ["validate"])
        assert result.exit_code == 0, result.output
        assert "beta1" in result.output
        assert "FAIL" not in result.output

    def test_json_format(self, runner, bundled):
        result = runner.invoke(cli, ["validate", bundled("default"), "--format", "json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["scenario"] == "default"
        assert payload["bounds"]["prefactor"] == pytest.approx(2.0)

    def test_zero_zeta_fails(self, runner, default_data, write_scenario):
        """zeta = 0 is an assumption failure (exit 1)."""
        default_data["zeta"] = 0.0
        result = runner.invoke(cli, ["validate", str(write_scenario(default_data))])
        assert result.exit_code == 1
        assert "zeta>0" in result.output

    def test_weak_diffusion_fails_absorbing_condition(self, runner, bundled):
        result = runner.invoke(cli, ["validate", bundled("weak_diffusion")])
        assert result.exit_code == 1
        assert "absorbing-coefficient" in result.output

    def test_weak_diffusion_without_absorbing_condition(self, runner, bundled):
        result = runner.invoke(cli, ["validate", bundled("weak_diffusion"), "--no-absorbing"])
        assert result.exit_code == 0, result.output

    def test_malformed_json(self, runner, write_scenario):
        """Parse errors map to exit code 2."""
        result = runner.invoke(cli, ["validate", str(write_scenario("{not json"))])
        assert result.exit_code == 2
        assert "invalid JSON" in result.output

    def test_missing_key(self, runner, default_data, write_scenario):
        del default_data["horizon"]
        result = runner.invoke(cli, ["validate", str(write_scenario(default_data))])
        assert result.exit_code == 2
        assert "scenario.horizon" in result.output

    def test_three_dimensional_domain(self, runner, default_data, write_scenario):
        default_data["domain"] = {"dims": 3, "lengths": 3.14, "modes": 4}
        result = runner.invoke(cli, ["validate", str(write_scenario(default_data))])
        assert result.exit_code == 2
        assert "dims must be 1 or 2" in result.output


class TestRunCommand:
    """Test the run command."""

    def test_simulate_writes_artifacts(self, runner, bundled, tmp_path):
        result = runner.invoke(cli, ["run", bundled("linear"), "-e", "simulate", "--horizon", "1.0",
                                     "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output

        folder = run_folder(tmp_path, "linear", horizon=1.0)
        assert (folder / "summary.txt").exists()
        report = json.loads((folder / "report.json").read_text())
        assert report["passed"] is True
        assert report["forced"] is False
        assert report["bounds"]["beta1"] == pytest.approx(2.0)
        experiment = report["experiments"][0]
        assert experiment["series"] == {"trajectory": "simulate_trajectory.csv"}
        assert {v["invariant"] for v in experiment["verdicts"]} >= {"closed-form oracle", "self-convergence order"}

        lines = (folder / "simulate_trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,l2_squared,grad_squared,energy,coefficient"
        assert len(lines) == 1 + 161
        assert lines[1].split(",")[0] == "0.0"

    def test_runs_are_deterministic(self, runner, bundled, tmp_path):
        outputs = []
        for name in ("first", "second"):
            out = tmp_path / name
            result = runner.invoke(cli, ["run", bundled("linear"), "-e", "simulate", "--horizon", "0.5",
                                         "--out", str(out)])
            assert result.exit_code == 0, result.output
            outputs.append((run_folder(out, "linear", horizon=0.5) / "simulate_trajectory.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_unknown_experiment(self, runner, bundled, tmp_path):
        result = runner.invoke(cli, ["run", bundled("linear"), "-e", "simulate,spectrum", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "spectrum" in result.output

    def test_step_must_divide_delay(self, runner, bundled, tmp_path):
        result = runner.invoke(cli, ["run", bundled("linear"), "--dt", "0.3", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "does not divide" in result.output

    def test_validation_failure_stops_the_run(self, runner, bundled, tmp_path):
        result = runner.invoke(cli, ["run", bundled("weak_diffusion"), "-e", "absorption", "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert not any(tmp_path.iterdir())

    def test_force_records_the_override(self, runner, bundled, tmp_path):
        result = runner.invoke(cli, ["run", bundled("weak_diffusion"), "-e", "absorption", "--force",
                                     "--out", str(tmp_path)])
        assert result.exit_code == 1
        report = json.loads((run_folder(tmp_path, "weak_diffusion") / "report.json").read_text())
        assert report["forced"] is True
        assert report["bounds"] is None
        assert report["experiments"][0]["complete"] is False
        assert report["experiments"][0]["error"].startswith("AssumptionError")

    @patch('cli.run_experiments')
    def test_failed_invariant_exits_one(self, mock_run, runner, bundled, tmp_path):
        """A failing verdict is reported in the summary and exits 1."""
        mock_run.return_value = [ExperimentReport("simulate", verdicts=[Verdict("finite states", False, "nan")])]
        result = runner.invoke(cli, ["run", bundled("linear"), "-e", "simulate", "--out", str(tmp_path)])
        assert result.exit_code == 1
        summary = (run_folder(tmp_path, "linear") / "summary.txt").read_text()
        assert "FAIL" in summary
        assert summary.rstrip().endswith("overall: FAIL")
        mock_run.assert_called_once()
        assert mock_run.call_args.args[1] == ["simulate"]


class TestScenariosCommand:

    def test_lists_bundled_files(self, runner):
        result = runner.invoke(cli, ["scenarios"])
        assert result.exit_code == 0
        for name in ("default.json", "linear.json", "distributed.json", "weak_diffusion.json"):
            assert name in result.output


@pytest.fixture
def entry_point():
    """The main module, imported without attaching log handlers."""
    with patch("logger.setup_logging"):
        return importlib.import_module("main")


class TestEntryPoint:
    """Test the exit codes main() hands to the shell."""

    @pytest.mark.parametrize("interrupt", [KeyboardInterrupt(), click.exceptions.Abort()])
    def test_interrupt_exits_130(self, entry_point, interrupt):
        with patch.object(entry_point, "cli", side_effect=interrupt):
            with pytest.raises(SystemExit) as excinfo:
                entry_point.main()
        assert excinfo.value.code == 130

    @pytest.mark.parametrize("returned,expected", [(None, 0), (0, 0), (1, 1), (2, 2)])
    def test_command_codes_pass_through(self, entry_point, returned, expected):
        with patch.object(entry_point, "cli", return_value=returned) as mock_cli:
            with pytest.raises(SystemExit) as excinfo:
                entry_point.main()
        assert excinfo.value.code == expected
        mock_cli.assert_called_once_with(prog_name="ddlab", standalone_mode=False)

    def test_usage_errors_exit_2(self, entry_point, capsys):
        with patch.object(entry_point, "cli", side_effect=click.UsageError("no such option: --bogus")):
            with pytest.raises(SystemExit) as excinfo:
                entry_point.main()
        assert excinfo.value.code == 2
        assert "no such option: --bogus" in capsys.readouterr().err

    def test_unexpected_errors_exit_1(self, entry_point):
        with patch.object(entry_point, "cli", side_effect=RuntimeError("boom")):
            with pytest.raises(SystemExit) as excinfo:
                entry_point.main()
        assert excinfo.value.code == 1
