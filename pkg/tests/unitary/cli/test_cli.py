import json
import textwrap

import pandas as pd
import pytest

from finsler_audit.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from finsler_audit.reports import SCHEMA, SUMMARY_COLUMNS

CIRCLE = textwrap.dedent(
    """\
    circle:
      description: flat circle
      chart: periodic
      chart.resolution: 64
      function: sine
      checks: [duality, weak-laplacian, gradient-identity, heat-diagnostics]
      solver.dt: 5.0e-2
      solver.horizon: 0.5
    """
)

OVERCLAIM = textwrap.dedent(
    """\
    overclaim:
      chart: line
      chart.resolution: 129
      measure: gaussian
      measure.curvature: 1.0
      curvature: 1.5
      checks: [poincare]
    """
)


@pytest.fixture
def write_cfg(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def test_list_json(capsys):
    assert main(["list", "--json"]) == EXIT_OK
    entries = json.loads(capsys.readouterr().out)
    assert len(entries) == 7
    assert {"name", "file", "claims", "expected_runtime", "description"} <= set(entries[0])


def test_list_table():
    assert main(["list"]) == EXIT_OK


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["run"],
        ["audit"],
        ["run", "a.cfg", "--jobs", "0"],
        ["verify-all", "--colour"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_run_writes_artifacts(write_cfg, tmp_path):
    output = tmp_path / "out"
    code = main(["run", write_cfg("circle.cfg", CIRCLE), "--output", str(output)])
    assert code == EXIT_OK

    summary = pd.read_csv(output / "summary.csv")
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert list(summary["claim"]) == ["duality", "weak-laplacian", "gradient-identity", "heat-diagnostics"]
    assert summary["passed"].all()

    payload = json.loads((output / "report.json").read_text())
    assert payload["schema"] == SCHEMA
    assert payload["passed"] is True
    (scenario,) = payload["scenarios"]
    assert scenario["name"] == "circle"
    assert len(scenario["reports"]) == 4
    assert (output / "heat_circle_sine.csv").exists()
    assert not (output / "heat_circle_sine.svg").exists()


def test_plots_and_seed(write_cfg, tmp_path):
    output = tmp_path / "out"
    main(["run", write_cfg("circle.cfg", CIRCLE), "--output", str(output), "--plots", "--seed", "5"])
    assert (output / "heat_circle_sine.svg").exists()
    payload = json.loads((output / "report.json").read_text())
    assert payload["scenarios"][0]["seed"] == 5


def test_failed_claim_exit_code(write_cfg, tmp_path):
    output = tmp_path / "out"
    assert main(["run", write_cfg("over.cfg", OVERCLAIM), "--output", str(output)]) == EXIT_FAILED
    summary = pd.read_csv(output / "summary.csv")
    assert summary["error"][0].startswith("HypothesisUnverified")


def test_empty_checks_pass(write_cfg, tmp_path):
    path = write_cfg("empty.cfg", "nothing:\n  chart: periodic\n")
    assert main(["run", path, "--output", str(tmp_path / "out")]) == EXIT_OK


@pytest.mark.parametrize(
    "text",
    [
        "broken:\n  chart: hyperbolic\n",
        "broken:\n  checks: [bochner-best]\n",
        "broken: [\n",
    ],
)
def test_config_errors(write_cfg, tmp_path, text):
    output = tmp_path / "out"
    assert main(["run", write_cfg("broken.cfg", text), "--output", str(output)]) == EXIT_USAGE
    assert not output.exists()


def test_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_USAGE
