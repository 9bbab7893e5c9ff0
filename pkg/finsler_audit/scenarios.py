"""
Scenario files: parsing, the function library, builders and the runner.

A scenario file is a YAML document whose top-level keys are scenario names.
Each section is a flat mapping of dotted keys::

    sphere:
      chart: sphere
      chart.resolution: 256
      function: cos-theta
      checks: [poincare, poincare-corrected]
      check.poincare.tolerance: 1.0e-6

Unknown keys and unresolved names raise ConfigError carrying the file,
line and key.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml
from rich.console import Console as RichConsole

from finsler_audit.audit import (
    InequalityReport,
    check_bochner_identity,
    check_bochner_integrated,
    check_bochner_pointwise,
    check_chain_rule,
    check_duality,
    check_energy_laplacian_bound,
    check_entropy_condition,
    check_gamma2_scaling,
    check_gradient_identity,
    check_heat_diagnostics,
    check_linearized_symmetry,
    check_logsobolev,
    check_poincare,
    check_product_rule,
    check_ricci_certificate,
    check_spectral_gap,
    check_volume_bound,
    check_weak_laplacian,
    error_report,
)
from finsler_audit.calculus import OperatorContext
from finsler_audit.constants import SOLVER_RESIDUAL
from finsler_audit.curvature import ric_bound_scan
from finsler_audit.exceptions import ConfigError, FinslerAuditError, InvalidParameter
from finsler_audit.heatflow import HeatTrajectory, solve_heat
from finsler_audit.mesh import (
    Chart,
    gaussian_measure,
    lebesgue_measure,
    make_sphere_reduction,
)
from finsler_audit.norm import MinkowskiNormSpec

logger = RichConsole(file=sys.stderr)

PRESET_DIR = Path(__file__).parent / "presets"

CHART_KINDS = ("periodic", "interval", "line", "sphere")
METRIC_KINDS = ("euclidean", "riemannian", "randers")
MEASURE_KINDS = ("lebesgue", "gaussian", "sphere")

# errors a checker may raise on bad data; they become failed report rows
CHECK_ERRORS = (FinslerAuditError, ArithmeticError, NotImplementedError, np.linalg.LinAlgError)
# chart, measure and norm constructors validate with plain ValueError
BUILD_ERRORS = CHECK_ERRORS + (ValueError,)


# ---------------- function library ----------------


def _angles(chart, axis, periodic):
    """Coordinate along ``axis`` rescaled to [0, 2π) (periodic) or [0, π]."""
    lower, upper = chart.lower[axis], chart.upper[axis]
    span = (2.0 if periodic else 1.0) * math.pi
    return span * (chart.nodes[..., axis] - lower) / (upper - lower)


def _center(chart):
    return np.array([0.5 * (lo + hi) for lo, hi in zip(chart.lower, chart.upper)])


def _half_extent(chart):
    return 0.5 * min(hi - lo for lo, hi in zip(chart.lower, chart.upper))


def _linear(chart, slope, seed, curvature):
    return slope * chart.nodes[..., 0]


def _cos_theta(chart, frequency, seed, curvature):
    return np.cos(frequency * chart.nodes[..., 0])


def _sine(chart, frequency, seed, curvature):
    total = np.zeros(chart.shape)
    for axis in range(chart.dimension):
        total += np.sin(frequency * _angles(chart, axis, chart.periodic) + axis)
    return total


def _gaussian_tilt(chart, tilt, seed, curvature):
    """e^{t x - t²/(2K)}, a probability density for the Gaussian measure of curvature K."""
    if not curvature or curvature <= 0.0:
        raise InvalidParameter("gaussian-tilt needs a gaussian measure")
    return np.exp(tilt * chart.nodes[..., 0] - tilt**2 / (2.0 * curvature))


def _exponential(chart, rate, seed, curvature):
    return np.exp(rate * chart.nodes[..., 0])


def _perturbed_cos(chart, amplitude, seed, curvature):
    return 1.0 + amplitude * np.cos(chart.nodes[..., 0])


def _bump(chart, fraction, seed, curvature):
    radius = fraction * _half_extent(chart)
    q = np.sum((chart.nodes - _center(chart)) ** 2, axis=-1) / radius**2
    inside = q < 1.0
    return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - q, 1.0)), 0.0)


def _gaussian_bump(chart, fraction, seed, curvature):
    sigma = fraction * _half_extent(chart)
    return np.exp(-np.sum((chart.nodes - _center(chart)) ** 2, axis=-1) / (2.0 * sigma**2))


def _random_smooth(chart, modes, seed, curvature):
    """A few low Fourier modes with seeded coefficients decaying like 1/k²."""
    rng = np.random.default_rng(seed)
    total = np.zeros(chart.shape)
    angles = [_angles(chart, axis, chart.periodic) for axis in range(chart.dimension)]
    for s in angles:
        for k in range(1, int(modes) + 1):
            a, b = rng.normal(size=2) / k**2
            total += a * np.cos(k * s)
            if chart.periodic:
                total += b * np.sin(k * s)
    if chart.dimension == 2:
        total += 0.25 * rng.normal() * np.cos(angles[0] + angles[1])
    return total


def _constant(chart, value, seed, curvature):
    return np.full(chart.shape, float(value))


@dataclass(frozen=True)
class LibraryFunction:
    fn: Callable
    default: float
    description: str


FUNCTIONS: Dict[str, LibraryFunction] = {
    "linear": LibraryFunction(_linear, 1.0, "a x_1"),
    "cos-theta": LibraryFunction(_cos_theta, 1.0, "cos(k x_1)"),
    "sine": LibraryFunction(_sine, 1.0, "sum of sin(k s_i) over the axes"),
    "gaussian-tilt": LibraryFunction(_gaussian_tilt, 0.5, "exp(t x_1 - t^2/2K)"),
    "exponential": LibraryFunction(_exponential, 0.5, "exp(a x_1)"),
    "perturbed-cos": LibraryFunction(_perturbed_cos, 0.01, "1 + e cos(x_1)"),
    "bump": LibraryFunction(_bump, 0.5, "smooth compactly supported bump at the chart center"),
    "gaussian-bump": LibraryFunction(_gaussian_bump, 0.1, "narrow gaussian at the chart center"),
    "random-smooth": LibraryFunction(_random_smooth, 3, "seeded low Fourier modes"),
    "constant": LibraryFunction(_constant, 1.0, "constant"),
}


@dataclass(frozen=True)
class FunctionRef:
    """A library function name with an optional argument, written ``"name arg"``."""

    name: str
    argument: Optional[float] = None

    @classmethod
    def parse(cls, text) -> "FunctionRef":
        parts = str(text).split()
        if not parts or len(parts) > 2:
            raise ValueError(f"cannot read function reference '{text}'")
        if parts[0] not in FUNCTIONS:
            raise KeyError(parts[0])
        return cls(parts[0], float(parts[1]) if len(parts) == 2 else None)

    @property
    def label(self) -> str:
        return self.name if self.argument is None else f"{self.name}({self.argument:g})"

    def values(self, chart: Chart, seed: int = 0, curvature: Optional[float] = None) -> np.ndarray:
        entry = FUNCTIONS[self.name]
        argument = entry.default if self.argument is None else self.argument
        return entry.fn(chart, argument, seed, curvature)


# ---------------- configuration ----------------


@dataclass(frozen=True)
class ChartConfig:
    kind: str = "periodic"
    resolution: Tuple[int, ...] = (64,)
    period: Tuple[float, ...] = (2.0 * math.pi,)
    origin: Tuple[float, ...] = (0.0,)
    dimension: int = 1
    half_width: float = 8.0


@dataclass(frozen=True)
class MetricConfig:
    kind: str = "euclidean"
    diagonal: Optional[Tuple[float, ...]] = None
    form: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class MeasureConfig:
    kind: str = "lebesgue"
    curvature: Optional[float] = None
    normalize: bool = True


@dataclass(frozen=True)
class SolverConfig:
    dt: Optional[float] = None
    horizon: float = 1.0
    residual: float = SOLVER_RESIDUAL


@dataclass(frozen=True)
class VolumeConfig:
    center: Optional[Tuple[float, ...]] = None
    radii: Tuple[float, ...] = (1.0,)
    r_min: Tuple[float, ...] = ()
    distributional: bool = False


@dataclass(frozen=True)
class CheckConfig:
    name: str
    tolerance: float
    function: Optional[FunctionRef] = None
    parameters: Tuple[float, ...] = ()
    # a list of parameters suffixes every claim with [p=value]
    listed: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    description: str = ""
    expected_runtime: str = ""
    chart: ChartConfig = ChartConfig()
    metric: MetricConfig = MetricConfig()
    measure: MeasureConfig = MeasureConfig()
    solver: SolverConfig = SolverConfig()
    volume: VolumeConfig = VolumeConfig()
    function: FunctionRef = FunctionRef("linear")
    seed: int = 0
    curvature: Optional[float] = None
    tolerance: float = 1e-6
    checks: Tuple[CheckConfig, ...] = ()
    source: Optional[str] = None

    @property
    def claims(self) -> List[str]:
        return [check.name for check in self.checks]


TOP_KEYS = ("description", "expected_runtime", "curvature", "checks", "tolerance")
GROUP_KEYS = {
    "chart": ("resolution", "period", "origin", "dimension", "half_width"),
    "metric": ("diagonal", "form"),
    "measure": ("curvature", "normalize"),
    "function": ("parameter", "seed"),
    "solver": ("dt", "horizon", "residual"),
    "volume": ("center", "radii", "r_min", "distributional"),
}
KIND_GROUPS = ("chart", "metric", "measure", "function")
CHECK_KEYS = ("tolerance", "function", "parameter")


def _floats(value) -> Tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return (float(value),)


def _ints(value) -> Tuple[int, ...]:
    return tuple(int(v) for v in _floats(value))


def _flag(value) -> bool:
    if not isinstance(value, bool):
        raise TypeError("expected true or false")
    return value


def _key_lines(text, path) -> Dict[tuple, int]:
    """1-based line of every (section, key) pair, from the YAML node graph."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(
            f"invalid YAML: {getattr(exc, 'problem', exc)}",
            path=path,
            line=mark.line + 1 if mark else None,
        ) from exc
    lines = {}
    if root is None:
        return lines
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("a scenario file maps scenario names to sections", path, root.start_mark.line + 1)
    for key_node, value_node in root.value:
        lines[(key_node.value, None)] = key_node.start_mark.line + 1
        if isinstance(value_node, yaml.MappingNode):
            for sub_key, _ in value_node.value:
                lines[(key_node.value, sub_key.value)] = sub_key.start_mark.line + 1
    return lines


class _SectionParser:
    def __init__(self, name, raw, lines, path):
        self.name = name
        self.raw = raw
        self.lines = lines
        self.path = path

    def fail(self, message, key=None):
        raise ConfigError(message, path=self.path, line=self.lines.get((self.name, key)), key=key)

    def convert(self, fn, value, key):
        try:
            return fn(value)
        except (TypeError, ValueError) as exc:
            self.fail(f"bad value {value!r}: {exc}", key)

    def parse(self) -> ScenarioConfig:
        if not isinstance(self.raw, dict):
            self.fail("a scenario section must be a mapping")

        groups = {group: {} for group in GROUP_KEYS}
        top = {}
        check_options = {}
        for key, value in self.raw.items():
            key = str(key)
            head, _, rest = key.partition(".")
            if key in TOP_KEYS:
                top[key] = value
            elif head in KIND_GROUPS and not rest:
                groups[head]["kind"] = (value, key)
            elif head in GROUP_KEYS and rest in GROUP_KEYS[head]:
                groups[head][rest] = (value, key)
            elif head == "check":
                check_name, _, option = rest.rpartition(".")
                if not check_name or option not in CHECK_KEYS:
                    self.fail("unknown check option", key)
                check_options.setdefault(check_name, {})[option] = (value, key)
            else:
                self.fail("unknown key", key)

        tolerance = self.convert(float, top.get("tolerance", ScenarioConfig.tolerance), "tolerance")
        if tolerance <= 0.0:
            self.fail("tolerance must be positive", "tolerance")

        chart = self.chart(groups["chart"])
        function, seed = self.function(groups["function"])
        curvature = top.get("curvature")
        return ScenarioConfig(
            name=self.name,
            description=str(top.get("description", "")).strip(),
            expected_runtime=str(top.get("expected_runtime", "")),
            chart=chart,
            metric=self.metric(groups["metric"], chart),
            measure=self.measure(groups["measure"], chart),
            solver=self.solver(groups["solver"]),
            volume=self.volume(groups["volume"]),
            function=function,
            seed=seed,
            curvature=None if curvature is None else self.convert(float, curvature, "curvature"),
            tolerance=tolerance,
            checks=self.checks(top.get("checks", []), check_options, tolerance),
            source=str(self.path) if self.path else None,
        )

    def chart(self, entries) -> ChartConfig:
        values = {}
        kind, key = entries.pop("kind", (ChartConfig.kind, "chart"))
        if kind not in CHART_KINDS:
            self.fail(f"unknown chart '{kind}', expected one of {', '.join(CHART_KINDS)}", key)
        converters = {
            "resolution": _ints,
            "period": _floats,
            "origin": _floats,
            "dimension": int,
            "half_width": float,
        }
        for option, (value, key) in entries.items():
            values[option] = self.convert(converters[option], value, key)
        if kind != "periodic" and values.get("dimension", 1) != 1:
            self.fail("only periodic charts are two dimensional", "chart.dimension")
        return ChartConfig(kind=kind, **values)

    def metric(self, entries, chart) -> MetricConfig:
        kind, key = entries.pop("kind", (MetricConfig.kind, "metric"))
        if kind not in METRIC_KINDS:
            self.fail(f"unknown metric '{kind}', expected one of {', '.join(METRIC_KINDS)}", key)
        if chart.kind == "sphere" and kind != "euclidean":
            self.fail("the sphere reduction carries its own metric", key)
        values = {option: self.convert(_floats, value, key) for option, (value, key) in entries.items()}
        if kind == "randers" and "form" not in values:
            self.fail("a randers metric needs metric.form", "metric")
        if kind != "randers" and "form" in values:
            self.fail("metric.form only applies to randers metrics", "metric.form")
        return MetricConfig(kind=kind, **values)

    def measure(self, entries, chart) -> MeasureConfig:
        default = "sphere" if chart.kind == "sphere" else MeasureConfig.kind
        kind, key = entries.pop("kind", (default, "measure"))
        if kind not in MEASURE_KINDS:
            self.fail(f"unknown measure '{kind}', expected one of {', '.join(MEASURE_KINDS)}", key)
        if (kind == "sphere") != (chart.kind == "sphere"):
            self.fail("the sphere measure goes with the sphere chart", key)
        values = {}
        if "curvature" in entries:
            value, key = entries["curvature"]
            values["curvature"] = self.convert(float, value, key)
        if "normalize" in entries:
            value, key = entries["normalize"]
            values["normalize"] = self.convert(_flag, value, key)
        if kind == "gaussian" and values.get("curvature") is None:
            self.fail("a gaussian measure needs measure.curvature", "measure")
        return MeasureConfig(kind=kind, **values)

    def solver(self, entries) -> SolverConfig:
        values = {option: self.convert(float, value, key) for option, (value, key) in entries.items()}
        for option, value in values.items():
            if value <= 0.0:
                self.fail("must be positive", f"solver.{option}")
        return SolverConfig(**values)

    def volume(self, entries) -> VolumeConfig:
        values = {}
        for option, (value, key) in entries.items():
            values[option] = self.convert(_flag if option == "distributional" else _floats, value, key)
        return VolumeConfig(**values)

    def function_ref(self, value, key) -> FunctionRef:
        try:
            return FunctionRef.parse(value)
        except KeyError:
            self.fail(f"unknown function '{value}', expected one of {', '.join(FUNCTIONS)}", key)
        except ValueError as exc:
            self.fail(str(exc), key)

    def function(self, entries):
        value, key = entries.pop("kind", ("linear", "function"))
        ref = self.function_ref(value, key)
        if "parameter" in entries:
            value, key = entries["parameter"]
            ref = replace(ref, argument=self.convert(float, value, key))
        seed = 0
        if "seed" in entries:
            value, key = entries["seed"]
            seed = self.convert(int, value, key)
        return ref, seed

    def checks(self, names, options, tolerance) -> Tuple[CheckConfig, ...]:
        if isinstance(names, str):
            names = [names]
        if not isinstance(names, list):
            self.fail("checks must be a list of check names", "checks")
        for name in names:
            if name not in CHECKS:
                self.fail(f"unknown check '{name}'", "checks")
        for name, entries in options.items():
            if name not in names:
                _, key = next(iter(entries.values()))
                self.fail(f"options given for check '{name}', which is not listed", key)

        checks = []
        for name in names:
            entries = options.get(name, {})
            values = {"tolerance": tolerance}
            if "tolerance" in entries:
                value, key = entries["tolerance"]
                values["tolerance"] = self.convert(float, value, key)
                if values["tolerance"] <= 0.0:
                    self.fail("tolerance must be positive", key)
            if "function" in entries:
                values["function"] = self.function_ref(*entries["function"])
            if "parameter" in entries:
                value, key = entries["parameter"]
                values["parameters"] = self.convert(_floats, value, key)
                values["listed"] = isinstance(value, list)
            checks.append(CheckConfig(name=name, **values))
        return tuple(checks)


def parse_scenarios(text: str, path=None) -> List[ScenarioConfig]:
    lines = _key_lines(text, path)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", path=path) from exc
    if data is None:
        return []
    return [_SectionParser(str(name), raw, lines, path).parse() for name, raw in data.items()]


def load_scenarios(path) -> List[ScenarioConfig]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc.strerror}", path=path) from exc
    return parse_scenarios(text, path)


# ---------------- builders ----------------


def build_chart(config: ChartConfig) -> Chart:
    if config.kind == "periodic":
        periods = config.period * config.dimension if len(config.period) == 1 else config.period
        return Chart.periodic_box(periods, config.resolution, origin=config.origin)
    if config.kind == "interval":
        a = config.origin[0]
        return Chart.weighted_interval(a, a + config.period[0], config.resolution[0])
    if config.kind == "line":
        return Chart.truncated_line(config.resolution[0], half_width=config.half_width)
    return make_sphere_reduction(config.resolution[0])[0]


def build_norm(config: MetricConfig, dimension: int) -> MinkowskiNormSpec:
    diagonal = config.diagonal or (1.0,) * dimension
    if len(diagonal) != dimension:
        raise ValueError(f"metric.diagonal has {len(diagonal)} entries for a {dimension}-dimensional chart")
    if config.kind == "euclidean":
        return MinkowskiNormSpec.euclidean(dimension)
    if config.kind == "riemannian":
        return MinkowskiNormSpec.riemannian(np.diag(diagonal))
    if len(config.form) != dimension:
        raise ValueError(f"metric.form has {len(config.form)} entries for a {dimension}-dimensional chart")
    return MinkowskiNormSpec.randers(np.diag(diagonal), np.asarray(config.form))


def build_context(config: ScenarioConfig) -> OperatorContext:
    if config.chart.kind == "sphere":
        _, spec, measure = make_sphere_reduction(config.chart.resolution[0])
        return OperatorContext(spec, measure)
    chart = build_chart(config.chart)
    spec = build_norm(config.metric, chart.dimension)
    if config.measure.kind == "gaussian":
        measure = gaussian_measure(chart, config.measure.curvature, normalize=config.measure.normalize)
    else:
        measure = lebesgue_measure(chart, normalize=config.measure.normalize)
    return OperatorContext(spec, measure)


def scenario_curvature(config: ScenarioConfig) -> float:
    """The lower Ricci bound K the checks are run with."""
    if config.curvature is not None:
        return config.curvature
    if config.measure.kind == "gaussian":
        return config.measure.curvature
    if config.measure.kind == "sphere":
        return 1.0
    return 0.0


# ---------------- runner ----------------


@dataclass
class ScenarioResult:
    name: str
    reports: List[InequalityReport] = field(default_factory=list)
    trajectories: Dict[str, HeatTrajectory] = field(default_factory=dict)
    runtime: float = 0.0
    seed: int = 0
    source: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports if not r.informational)


class Scenario:
    """A built scenario: the operator context plus caches shared by its checks."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.ctx = build_context(config)
        self.curvature = scenario_curvature(config)
        self.trajectories: Dict[str, HeatTrajectory] = {}
        self._certified = None

    @property
    def chart(self) -> Chart:
        return self.ctx.chart

    def values(self, ref: FunctionRef, seed: Optional[int] = None) -> np.ndarray:
        return ref.values(
            self.chart,
            seed=self.config.seed if seed is None else seed,
            curvature=self.config.measure.curvature,
        )

    def test_function(self) -> np.ndarray:
        return self.values(FunctionRef("bump"))

    def identity_field(self, offset: int) -> np.ndarray:
        """A seeded smooth field for the node-wise identity checks."""
        return self.values(FunctionRef("random-smooth"), seed=self.config.seed + offset)

    def certified_k(self) -> float:
        if self._certified is None:
            self._certified = ric_bound_scan(self.ctx.spec, self.ctx.measure)
            logger.log(f"{self.config.name}: sampled Ricci bound {self._certified:.6g}")
        return self._certified

    def trajectory(self, ref: FunctionRef) -> HeatTrajectory:
        if ref.label not in self.trajectories:
            solver = self.config.solver
            self.trajectories[ref.label] = solve_heat(
                self.ctx,
                self.values(ref),
                solver.horizon,
                solver.dt,
                residual=solver.residual,
                store_fields=False,
                label=f"{self.config.name}-{ref.label}",
            )
        return self.trajectories[ref.label]

    def center_node(self) -> tuple:
        center = self.config.volume.center
        point = _center(self.chart) if center is None else np.asarray(center, dtype=float)
        distance = np.sum((self.chart.nodes - point) ** 2, axis=-1)
        return tuple(int(i) for i in np.unravel_index(int(np.argmin(distance)), self.chart.shape))


def _pointwise(variant):
    def run(s, check, u, parameter):
        return check_bochner_pointwise(
            s.ctx, u, s.curvature, variant, check.tolerance, certified_k=s.certified_k()
        )

    return run


def _run_integrated(s, check, u, parameter):
    return check_bochner_integrated(
        s.ctx, u, s.test_function(), s.curvature, check.tolerance, certified_k=s.certified_k()
    )


def _run_energy(s, check, u, parameter):
    return check_energy_laplacian_bound(
        s.ctx, u, s.curvature, check.tolerance, certified_k=s.certified_k()
    )


def _run_poincare(s, check, u, parameter):
    return check_poincare(s.ctx, u, s.curvature, check.tolerance, certified_k=s.certified_k())


def _run_poincare_corrected(s, check, u, parameter):
    return check_poincare(
        s.ctx,
        u,
        s.curvature,
        check.tolerance,
        with_correction=True,
        certified_k=s.certified_k(),
        trajectory=s.trajectory(_function_for(s, check, parameter)),
    )


def _run_logsobolev(s, check, u, parameter):
    return check_logsobolev(s.ctx, u, s.curvature, check.tolerance, certified_k=s.certified_k())


def _run_scaling(s, check, u, parameter):
    return check_gamma2_scaling(s.ctx, u, 1.0 if parameter is None else parameter, check.tolerance)


def _run_entropy(s, check, u, parameter):
    if parameter is None:
        if s.curvature <= 0.0:
            raise InvalidParameter("entropy-condition needs check.entropy-condition.parameter (C) when K <= 0")
        parameter = 1.0 / s.curvature
    return check_entropy_condition(s.ctx, u, parameter, check.tolerance)


def _run_volume(s, check, u, parameter):
    volume = s.config.volume
    r_min = volume.r_min or (3.0 * max(s.chart.spacing),)
    certified = s.certified_k()
    return [
        check_volume_bound(
            s.ctx,
            s.center_node(),
            radius,
            s.curvature,
            r_min,
            check.tolerance,
            distributional=volume.distributional,
            certified_k=certified,
        )
        for radius in volume.radii
    ]


def _run_symmetry(s, check, u, parameter):
    return check_linearized_symmetry(
        s.ctx, u, s.test_function(), s.identity_field(1), check.tolerance
    )


def _run_product(s, check, u, parameter):
    return check_product_rule(s.ctx, u, s.identity_field(2), check.tolerance)


def _run_chain(s, check, u, parameter):
    return check_chain_rule(s.ctx, u, s.identity_field(2), check.tolerance)


def _run_heat(s, check, u, parameter):
    return check_heat_diagnostics(
        s.ctx, check.tolerance, trajectory=s.trajectory(_function_for(s, check, parameter))
    )


CHECKS: Dict[str, Callable] = {
    "bochner-plain": _pointwise("plain"),
    "bochner-improved": _pointwise("improved"),
    "bochner-gamma2": _pointwise("gamma2"),
    "bochner-dimensional": _pointwise("dimensional"),
    "bochner-integrated": _run_integrated,
    "bochner-identity": lambda s, check, u, p: check_bochner_identity(s.ctx, u, check.tolerance),
    "energy-laplacian-bound": _run_energy,
    "poincare": _run_poincare,
    "poincare-corrected": _run_poincare_corrected,
    "log-sobolev": _run_logsobolev,
    "gamma2-scaling": _run_scaling,
    "entropy-condition": _run_entropy,
    "volume-bound": _run_volume,
    "spectral-gap": lambda s, check, u, p: check_spectral_gap(s.ctx, s.curvature, check.tolerance),
    "ricci-certificate": lambda s, check, u, p: check_ricci_certificate(s.ctx, s.curvature, check.tolerance),
    "duality": lambda s, check, u, p: check_duality(s.ctx, check.tolerance, seed=s.config.seed),
    "gradient-identity": lambda s, check, u, p: check_gradient_identity(s.ctx, u, check.tolerance),
    "linearized-symmetry": _run_symmetry,
    "product-rule": _run_product,
    "chain-rule": _run_chain,
    "weak-laplacian": lambda s, check, u, p: check_weak_laplacian(s.ctx, u, s.test_function(), check.tolerance),
    "heat-diagnostics": _run_heat,
}

# checks whose parameter is their own constant rather than the function argument
OWN_PARAMETER = {"gamma2-scaling": "a", "entropy-condition": "C"}


def _function_for(s, check, parameter) -> FunctionRef:
    ref = check.function or s.config.function
    if parameter is not None and check.name not in OWN_PARAMETER:
        ref = replace(ref, argument=parameter)
    return ref


def _run_check(s: Scenario, check: CheckConfig) -> List[InequalityReport]:
    reports = []
    for parameter in check.parameters or (None,):
        suffix = f"[p={parameter:g}]" if check.listed else ""
        try:
            u = s.values(_function_for(s, check, parameter))
            produced = CHECKS[check.name](s, check, u, parameter)
        except CHECK_ERRORS as exc:
            logger.log(f"{s.config.name}: {check.name}{suffix} failed with {type(exc).__name__}: {exc}")
            reports.append(error_report(check.name + suffix, exc, s.config.name))
            continue
        for report in produced if isinstance(produced, list) else [produced]:
            report.claim += suffix
            report.scenario = s.config.name
            reports.append(report)
    return reports


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Run every check of one scenario; checker errors become failed rows."""
    start = time.perf_counter()
    result = ScenarioResult(config.name, seed=config.seed, source=config.source)
    logger.log(f"scenario '{config.name}': {len(config.checks)} checks")
    try:
        scenario = Scenario(config)
    except BUILD_ERRORS as exc:
        logger.log(f"scenario '{config.name}' could not be built: {exc}")
        result.reports.append(error_report("scenario", exc, config.name))
        return result

    for check in config.checks:
        result.reports.extend(_run_check(scenario, check))
    result.trajectories = dict(scenario.trajectories)
    result.runtime = time.perf_counter() - start
    logger.log(
        f"scenario '{config.name}': {sum(r.passed for r in result.reports)}/{len(result.reports)} "
        f"passed in {result.runtime:.1f}s"
    )
    return result


def with_seed(config: ScenarioConfig, seed: Optional[int]) -> ScenarioConfig:
    return config if seed is None else replace(config, seed=seed)


# ---------------- catalog ----------------


def preset_paths() -> List[Path]:
    return sorted(PRESET_DIR.glob("*.cfg"))


def bundled_scenarios() -> List[ScenarioConfig]:
    configs = []
    for path in preset_paths():
        configs.extend(load_scenarios(path))
    return configs


def catalog() -> List[dict]:
    return [
        {
            "name": config.name,
            "file": Path(config.source).name,
            "claims": config.claims,
            "expected_runtime": config.expected_runtime,
            "description": config.description,
        }
        for config in bundled_scenarios()
    ]
