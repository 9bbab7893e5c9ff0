import textwrap

import pytest

from finsler_audit.exceptions import ConfigError
from finsler_audit.scenarios import (
    FunctionRef,
    bundled_scenarios,
    catalog,
    load_scenarios,
    parse_scenarios,
    scenario_curvature,
    with_seed,
)

TORUS = textwrap.dedent(
    """\
    torus:
      description: flat torus
      expected_runtime: 2 s
      chart: periodic
      chart.dimension: 2
      chart.resolution: 32
      metric: randers
      metric.diagonal: [1.0, 2.0]
      metric.form: [0.25, 0.0]
      function: sine 2
      function.seed: 7
      tolerance: 1.0e-4
      checks: [duality, gamma2-scaling, log-sobolev]
      check.duality.tolerance: 1.0e-8
      check.gamma2-scaling.parameter: [0.5, 1.0]
      check.log-sobolev.function: gaussian-tilt
      check.log-sobolev.parameter: 0.5
      solver.dt: 1.0e-2
    """
)


def _parse_error(text):
    with pytest.raises(ConfigError) as info:
        parse_scenarios(textwrap.dedent(text), path="broken.cfg")
    return info.value


def test_full_section():
    (config,) = parse_scenarios(TORUS, path="torus.cfg")
    assert config.name == "torus"
    assert config.source == "torus.cfg"
    assert config.description == "flat torus"
    assert config.chart.kind == "periodic"
    assert config.chart.dimension == 2
    assert config.chart.resolution == (32,)
    assert config.metric.diagonal == (1.0, 2.0)
    assert config.metric.form == (0.25, 0.0)
    assert config.function == FunctionRef("sine", 2.0)
    assert config.seed == 7
    assert config.solver.dt == 1e-2
    assert config.solver.horizon == 1.0
    assert config.claims == ["duality", "gamma2-scaling", "log-sobolev"]

    duality, scaling, logsobolev = config.checks
    assert duality.tolerance == 1e-8
    assert scaling.tolerance == 1e-4
    assert scaling.parameters == (0.5, 1.0)
    assert scaling.listed
    assert logsobolev.function == FunctionRef("gaussian-tilt")
    assert logsobolev.parameters == (0.5,)
    assert not logsobolev.listed


def test_defaults():
    (config,) = parse_scenarios("plain:\n  checks: poincare\n")
    assert config.chart.kind == "periodic"
    assert config.metric.kind == "euclidean"
    assert config.measure.kind == "lebesgue"
    assert config.function == FunctionRef("linear")
    assert config.tolerance == 1e-6
    assert config.claims == ["poincare"]
    assert scenario_curvature(config) == 0.0


def test_empty_file():
    assert parse_scenarios("") == []
    assert parse_scenarios("# nothing here\n") == []


def test_curvature_defaults():
    configs = parse_scenarios(
        textwrap.dedent(
            """\
            gauss:
              chart: line
              measure: gaussian
              measure.curvature: 2.0
            ball:
              chart: sphere
            explicit:
              chart: sphere
              curvature: 0.5
            """
        )
    )
    assert [scenario_curvature(c) for c in configs] == [2.0, 1.0, 0.5]
    assert configs[1].measure.kind == "sphere"


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("a:\n  chart: periodic\n  colour: red\n", 3, "colour"),
        ("a:\n  chart: hyperbolic\n", 2, "chart"),
        ("a:\n  checks: [poincare, bochner-best]\n", 2, "checks"),
        ("a:\n  checks: [poincare]\n  check.duality.tolerance: 1.0\n", 3, "check.duality.tolerance"),
        ("a:\n  checks: [poincare]\n  check.poincare.colour: red\n", 3, "check.poincare.colour"),
        ("a:\n  tolerance: 0.0\n", 2, "tolerance"),
        ("a:\n  checks: [poincare]\n  check.poincare.tolerance: -1.0\n", 3, "check.poincare.tolerance"),
        ("a:\n  chart: sphere\n  metric: randers\n  metric.form: [0.1]\n", 3, "metric"),
        ("a:\n  chart: line\n  measure: sphere\n", 3, "measure"),
        ("a:\n  chart: line\n  function: wobble\n", 3, "function"),
        ("a:\n  chart: line\n  chart.resolution: many\n", 3, "chart.resolution"),
        ("a:\n  measure.normalize: sometimes\n", 2, "measure.normalize"),
        ("a:\n  solver.dt: -1.0\n", 2, "solver.dt"),
    ],
)
def test_errors_carry_location(text, line, key):
    error = _parse_error(text)
    assert error.path == "broken.cfg"
    assert error.line == line
    assert error.key == key
    assert str(error).startswith(f"broken.cfg:{line}: key '{key}'")


def test_gaussian_needs_curvature():
    error = _parse_error("a:\n  chart: line\n  measure: gaussian\n")
    assert "measure.curvature" in error.message


def test_invalid_yaml():
    error = _parse_error("a:\n  chart: [periodic\n")
    assert "invalid YAML" in error.message
    assert error.line is not None


def test_sections_must_be_mappings():
    error = _parse_error("a: 3\n")
    assert error.line == 1


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenarios(tmp_path / "missing.cfg")


def test_load_from_disk(tmp_path):
    path = tmp_path / "torus.cfg"
    path.write_text(TORUS)
    (config,) = load_scenarios(path)
    assert config.source == str(path)


def test_with_seed():
    (config,) = parse_scenarios(TORUS)
    assert with_seed(config, None) is config
    assert with_seed(config, 3).seed == 3


def test_bundled_scenarios():
    names = [config.name for config in bundled_scenarios()]
    assert sorted(names) == [
        "flat-torus",
        "gaussian-line",
        "randers-gaussian",
        "randers-identities",
        "sphere",
        "volume-bound",
        "volume-bound-2d",
    ]


def test_catalog():
    entries = {entry["name"]: entry for entry in catalog()}
    sphere = entries["sphere"]
    assert sphere["file"] == "sphere.cfg"
    assert "poincare-corrected" in sphere["claims"]
    assert sphere["expected_runtime"]
    assert all(entry["description"] for entry in entries.values())
