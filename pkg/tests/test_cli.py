"""Tests for the command-line entry point, the runner and report emission."""
import csv
import math

import pytest

from config import REPORT_COLUMNS, ExitCode, ExperimentId, Verdict
from main import main
from models.experiment import ExperimentConfig, ReportRow
from runner import emit_report, exit_code_for, run_verification, setup_runner
from utils.errors import ConfigurationError, PrecisionError


def _row(verdict):
    return ReportRow(experiment="tau-mass", quantity="tau", estimate=1.0, verdict=verdict)


def _read_report(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_list_command(capsys):
    assert main(["list"]) == ExitCode.OK
    out = capsys.readouterr().out
    for experiment in ExperimentId.ALL:
        assert experiment in out


def test_help_and_usage_errors():
    assert main(["--help"]) == ExitCode.OK
    assert main([]) == ExitCode.USAGE
    assert main(["run"]) == ExitCode.USAGE


def test_unknown_experiment_writes_nothing(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["run", "--experiment", "nope", "--seed", "1", "--out", str(out)]) == ExitCode.USAGE
    assert not out.exists()


def test_missing_seed_is_a_usage_error(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["run", "--experiment", "quad-selfcheck", "--out", str(out)]) == ExitCode.USAGE
    assert not out.exists()


def test_malformed_config_file(tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text("seed=1\nthis line has no pair\n", encoding="utf-8")
    args = ["run", "--experiment", "tau-mass", "--config", str(config), "--out", str(tmp_path / "r.csv")]
    assert main(args) == ExitCode.USAGE
    assert main(["run", "--experiment", "tau-mass", "--config", str(tmp_path / "missing.cfg")]) == ExitCode.USAGE


def test_quad_selfcheck_report(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["run", "--experiment", "quad-selfcheck", "--seed", "1", "--out", str(out)]) == ExitCode.OK
    rows = _read_report(out)
    assert rows[0] == REPORT_COLUMNS
    assert len(rows) == 1 + 11
    assert all(row[8] == Verdict.PASS for row in rows[1:])
    assert all(row[0] == "quad-selfcheck" for row in rows[1:])


def test_oracle_exact_report(tmp_path):
    out = tmp_path / "oracle.csv"
    assert main(["run", "--experiment", "oracle-exact", "--seed", "1", "--out", str(out)]) == ExitCode.OK
    rows = _read_report(out)
    assert len(rows) == 1 + 8
    assert {row[8] for row in rows[1:]} == {Verdict.PASS}


def test_exit_code_for_verdicts():
    assert exit_code_for([_row(Verdict.PASS)]) == ExitCode.OK
    assert exit_code_for([_row(Verdict.PASS), _row(Verdict.UNDERPOWERED)]) == ExitCode.UNDERPOWERED
    assert exit_code_for([_row(Verdict.UNDERPOWERED), _row(Verdict.FAIL)]) == ExitCode.FAIL


def test_emit_report_formatting():
    text = emit_report([ReportRow(experiment="tau-mass", quantity="tau", estimate=2 * math.pi,
                                  verdict=Verdict.PASS, target=2 * math.pi)])
    header, line = text.splitlines()
    assert header.split(",") == REPORT_COLUMNS
    assert line.split(",")[2] == "6.28318531"
    with pytest.raises(ValueError):
        emit_report([])


def test_registry_covers_every_experiment():
    assert set(setup_runner()) == set(ExperimentId.ALL)


def test_pipeline_errors_become_failing_rows(tmp_path):
    def broken(config):
        raise PrecisionError("did not converge", 1.0, 2.0)

    config = ExperimentConfig(experiment="tau-mass", seed=1, output=str(tmp_path / "r.csv"))
    rows, code = run_verification(config, ledger_url="", registry={"tau-mass": broken})
    assert code == ExitCode.FAIL
    assert rows[0].quantity == "error: PrecisionError"
    assert rows[0].verdict == Verdict.FAIL
    assert _read_report(tmp_path / "r.csv")[1][1] == "error: PrecisionError"


def test_configuration_errors_propagate(tmp_path):
    def misconfigured(config):
        raise ConfigurationError("regions: bad")

    config = ExperimentConfig(experiment="tau-mass", seed=1, output=str(tmp_path / "r.csv"))
    with pytest.raises(ConfigurationError):
        run_verification(config, ledger_url="", registry={"tau-mass": misconfigured})
    with pytest.raises(ConfigurationError):
        run_verification(config, ledger_url="", registry={"exc-cov": misconfigured})
