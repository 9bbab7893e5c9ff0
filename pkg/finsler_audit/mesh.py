"""
Discretized model manifolds: charts, node-indexed fields, smooth measures,
finite-difference stencils and quadrature.

Node layouts:

- PeriodicBox: ``lower + j h`` with ``h = L / N``; periodic rectangle rule.
- WeightedInterval: cell midpoints ``a + (j + 1/2) h`` of ``N`` cells on
  ``[a, b]``; midpoint rule. With the reflecting flag, stencils see even
  (scalars) or odd (vector components) ghost values across the ends.
- TruncatedLine: ``N`` nodes from ``-A`` to ``A`` inclusive; trapezoid rule.

All reductions are plain sums over the C-ordered node array, so a given
input always produces the same bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import erfc

from finsler_audit.constants import (
    MIN_RESOLUTION,
    MIN_SPHERE_RESOLUTION,
    TAIL_TOLERANCE,
)
from finsler_audit.exceptions import UnsupportedChart
from finsler_audit.norm import MinkowskiNormSpec


class ChartKind(str, Enum):
    PERIODIC_BOX = "periodic-box"
    WEIGHTED_INTERVAL = "weighted-interval"
    TRUNCATED_LINE = "truncated-line"


@dataclass(frozen=True, eq=False)
class Chart:
    kind: ChartKind
    lower: tuple
    upper: tuple
    resolution: tuple
    reflecting: bool = False
    weight: Optional[Callable] = None
    tail_tolerance: Optional[float] = None
    metadata: Mapping = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if len(self.resolution) not in (1, 2):
            raise ValueError("charts are one or two dimensional")
        if len(self.resolution) == 2 and self.kind is not ChartKind.PERIODIC_BOX:
            raise ValueError(f"{self.kind.value} charts are one dimensional")
        if min(self.resolution) < MIN_RESOLUTION:
            raise ValueError(f"resolution must be at least {MIN_RESOLUTION}")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("chart extent must be positive")
        if self.weight is not None and np.any(self.weight(self.nodes) <= 0.0):
            raise ValueError("interval weight must be positive on the nodes")

    # ---------------- constructors ----------------

    @classmethod
    def periodic_box(cls, periods, resolution, origin=None, name="periodic-box"):
        periods = tuple(float(p) for p in np.atleast_1d(periods))
        resolution = tuple(int(r) for r in np.atleast_1d(resolution))
        if len(resolution) == 1 and len(periods) > 1:
            resolution = resolution * len(periods)
        if len(periods) == 1 and len(resolution) > 1:
            periods = periods * len(resolution)
        if origin is None:
            origin = (0.0,) * len(periods)
        origin = tuple(float(o) for o in np.atleast_1d(origin))
        if len(origin) == 1 and len(periods) > 1:
            origin = origin * len(periods)
        upper = tuple(o + p for o, p in zip(origin, periods))
        return cls(ChartKind.PERIODIC_BOX, origin, upper, resolution, name=name)

    @classmethod
    def weighted_interval(
        cls,
        a,
        b,
        resolution,
        weight=None,
        reflecting=True,
        metadata=None,
        name="weighted-interval",
    ):
        return cls(
            ChartKind.WEIGHTED_INTERVAL,
            (float(a),),
            (float(b),),
            (int(resolution),),
            reflecting=reflecting,
            weight=weight,
            metadata=dict(metadata or {}),
            name=name,
        )

    @classmethod
    def truncated_line(
        cls,
        resolution,
        half_width=8.0,
        tail_tolerance=TAIL_TOLERANCE,
        name="truncated-line",
    ):
        return cls(
            ChartKind.TRUNCATED_LINE,
            (-float(half_width),),
            (float(half_width),),
            (int(resolution),),
            tail_tolerance=tail_tolerance,
            name=name,
        )

    # ---------------- geometry ----------------

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple:
        return tuple(self.resolution)

    @property
    def periodic(self) -> bool:
        return self.kind is ChartKind.PERIODIC_BOX

    @property
    def node_count(self) -> int:
        return int(np.prod(self.resolution))

    @cached_property
    def spacing(self) -> tuple:
        extent = [hi - lo for lo, hi in zip(self.lower, self.upper)]
        if self.kind is ChartKind.TRUNCATED_LINE:
            return tuple(e / (n - 1) for e, n in zip(extent, self.resolution))
        return tuple(e / n for e, n in zip(extent, self.resolution))

    @cached_property
    def axes(self) -> list:
        axes = []
        for lo, hi, n, h in zip(self.lower, self.upper, self.resolution, self.spacing):
            if self.kind is ChartKind.PERIODIC_BOX:
                axes.append(lo + h * np.arange(n))
            elif self.kind is ChartKind.WEIGHTED_INTERVAL:
                axes.append(lo + h * (np.arange(n) + 0.5))
            else:
                axes.append(np.linspace(lo, hi, n))
        return axes

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.shape, float(np.prod(self.spacing)))
        if self.kind is ChartKind.TRUNCATED_LINE:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def point(self, index) -> np.ndarray:
        return self.nodes[tuple(np.atleast_1d(index))]

    def collar(self, width: int) -> np.ndarray:
        """Nodes within ``width`` cells of a non-periodic boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.periodic:
            return mask
        mask[:width] = True
        mask[-width:] = True
        return mask

    def scalar(self, values, name="u", mask=None) -> "ScalarField":
        return ScalarField(self, values, mask=mask, name=name)

    def vector(self, values, name="V", mask=None) -> "VectorField":
        return VectorField(self, values, mask=mask, name=name)

    def describe(self) -> str:
        extent = " x ".join(f"[{lo:g}, {hi:g}]" for lo, hi in zip(self.lower, self.upper))
        grid = "x".join(str(n) for n in self.resolution)
        return f"{self.name or self.kind.value} {extent} N={grid}"


# ---------------- fields ----------------


def _snapshot(chart, columns, path, field_name):
    frame = {f"x{i}": chart.nodes[..., i].ravel() for i in range(chart.dimension)}
    frame.update(columns)
    with open(path, "w", newline="") as handle:
        handle.write(f"# chart={chart.describe()} field={field_name}\n")
        pd.DataFrame(frame).to_csv(handle, index=False, float_format="%.17g")


@dataclass(frozen=True, eq=False)
class ScalarField:
    chart: Chart
    values: np.ndarray
    mask: Optional[np.ndarray] = None
    name: str = "u"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.chart.shape:
            raise ValueError(f"field shape {values.shape} does not match chart {self.chart.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"field '{self.name}' has non-finite values")
        object.__setattr__(self, "values", values)
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    def to_csv(self, path):
        columns = {self.name: self.values.ravel()}
        if self.mask is not None:
            columns["defined"] = self.mask.ravel().astype(int)
        _snapshot(self.chart, columns, path, self.name)


@dataclass(frozen=True, eq=False)
class VectorField:
    chart: Chart
    values: np.ndarray
    mask: Optional[np.ndarray] = None
    name: str = "V"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = self.chart.shape + (self.chart.dimension,)
        if values.shape != expected:
            raise ValueError(f"vector field shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"vector field '{self.name}' has non-finite values")
        object.__setattr__(self, "values", values)
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    def to_csv(self, path):
        columns = {
            f"{self.name}{i}": self.values[..., i].ravel() for i in range(self.chart.dimension)
        }
        if self.mask is not None:
            columns["defined"] = self.mask.ravel().astype(int)
        _snapshot(self.chart, columns, path, self.name)


def values_of(chart: Chart, f) -> np.ndarray:
    """Raw node values of a field or array living on ``chart``."""
    if isinstance(f, (ScalarField, VectorField)):
        if f.chart is not chart:
            raise ValueError("field lives on a different chart")
        return f.values
    return np.asarray(f, dtype=float)


# ---------------- measures ----------------


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """
    dm = e^Φ dx on a chart.

    ``log_density`` holds Φ at the nodes (already shifted by the
    normalization constant when ``normalized`` is set); ``log_density_fn``
    and ``log_density_grad`` evaluate the same Φ and ∇Φ off the grid.
    """

    chart: Chart
    log_density: np.ndarray
    normalized: bool = False
    log_density_fn: Optional[Callable] = None
    log_density_grad: Optional[Callable] = None
    name: str = ""

    @classmethod
    def from_function(cls, chart, fn, normalize=False, grad=None, name=""):
        phi = np.asarray(fn(chart.nodes), dtype=float)
        shift = 0.0
        if normalize:
            top = float(np.max(phi))
            shift = top + math.log(float(np.sum(chart.weights * np.exp(phi - top))))
        return cls(
            chart,
            phi - shift,
            normalized=normalize,
            log_density_fn=lambda x: np.asarray(fn(x), dtype=float) - shift,
            log_density_grad=grad,
            name=name,
        )

    @cached_property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    @cached_property
    def grad_phi(self) -> np.ndarray:
        if self.log_density_grad is not None:
            return np.asarray(self.log_density_grad(self.chart.nodes), dtype=float)
        return partial_derivatives(self.chart.scalar(self.log_density, name="phi"), 1)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.chart.weights * self.density))

    def phi(self, x):
        if self.log_density_fn is None:
            raise UnsupportedChart("measure has no off-grid log-density")
        return self.log_density_fn(np.asarray(x, dtype=float))


def lebesgue_measure(chart: Chart, normalize: bool = False) -> MeasureSpec:
    return MeasureSpec.from_function(
        chart,
        lambda x: np.zeros(np.shape(x)[:-1]),
        normalize=normalize,
        grad=lambda x: np.zeros(np.shape(x)),
        name="lebesgue",
    )


def gaussian_measure(
    chart: Chart, curvature: float, normalize: bool = True, center=None
) -> MeasureSpec:
    """Φ = -K |x - c|² / 2."""
    if curvature <= 0.0:
        raise ValueError("gaussian measures need a positive curvature")
    c = np.zeros(chart.dimension) if center is None else np.asarray(center, dtype=float)
    if chart.kind is ChartKind.TRUNCATED_LINE:
        half_width = min(abs(chart.lower[0] - c[0]), abs(chart.upper[0] - c[0]))
        tail = float(erfc(half_width * math.sqrt(curvature / 2.0)))
        if tail > chart.tail_tolerance:
            raise ValueError(
                f"gaussian tail mass {tail:.3e} outside the chart exceeds {chart.tail_tolerance:.1e}"
            )
    return MeasureSpec.from_function(
        chart,
        lambda x: -0.5 * curvature * np.sum((x - c) ** 2, axis=-1),
        normalize=normalize,
        grad=lambda x: -curvature * (x - c),
        name=f"gaussian(K={curvature:g})",
    )


# ---------------- stencils ----------------


def _periodic_first(u, axis, h):
    return (
        -np.roll(u, -2, axis) + 8.0 * np.roll(u, -1, axis)
        - 8.0 * np.roll(u, 1, axis) + np.roll(u, 2, axis)
    ) / (12.0 * h)


def _periodic_second(u, axis, h):
    return (
        -np.roll(u, -2, axis) + 16.0 * np.roll(u, -1, axis) - 30.0 * u
        + 16.0 * np.roll(u, 1, axis) - np.roll(u, 2, axis)
    ) / (12.0 * h**2)


def _reflected(u, parity):
    sign = 1.0 if parity == "even" else -1.0
    return np.concatenate([sign * u[:1], u, sign * u[-1:]])


def _bounded_first(u, h, reflecting, parity):
    if reflecting:
        padded = _reflected(u, parity)
        return (padded[2:] - padded[:-2]) / (2.0 * h)
    return np.gradient(u, h, edge_order=2)


def _bounded_second(u, h, reflecting, parity):
    if reflecting:
        padded = _reflected(u, parity)
        return (padded[2:] - 2.0 * u + padded[:-2]) / h**2
    d2 = np.empty_like(u)
    d2[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    d2[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h**2
    d2[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h**2
    return d2


def derivative(chart: Chart, values, axis: int, parity: str = "even") -> np.ndarray:
    """First derivative of node values along one chart axis."""
    u = np.asarray(values, dtype=float)
    if chart.periodic:
        return _periodic_first(u, axis, chart.spacing[axis])
    return _bounded_first(u, chart.spacing[0], chart.reflecting, parity)


def partial_derivatives(field, order: int = 1, parity: str = "even") -> np.ndarray:
    """
    First (``(..., n)``) or second (``(..., n, n)``) partial derivatives.

    4th-order central differences on periodic boxes; 2nd-order central with
    one-sided closure (or reflected ghosts) on interval charts. ``parity``
    selects the ghost extension at reflecting ends: "even" for scalars,
    "odd" for vector components.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    chart = field.chart
    u = field.values
    n = chart.dimension

    if chart.periodic:
        first = np.stack([_periodic_first(u, k, chart.spacing[k]) for k in range(n)], axis=-1)
        if order == 1:
            return first
        second = np.empty(chart.shape + (n, n))
        for k in range(n):
            second[..., k, k] = _periodic_second(u, k, chart.spacing[k])
            for j in range(k + 1, n):
                second[..., k, j] = _periodic_first(first[..., j], k, chart.spacing[k])
                second[..., j, k] = second[..., k, j]
        return second

    h = chart.spacing[0]
    if order == 1:
        return _bounded_first(u, h, chart.reflecting, parity)[..., None]
    return _bounded_second(u, h, chart.reflecting, parity)[..., None, None]


def integrate(field, m: MeasureSpec) -> float:
    """Quadrature of field * e^Φ over the chart."""
    values = values_of(m.chart, field)
    if values.shape != m.chart.shape:
        raise ValueError("integrand must be a scalar field on the measure's chart")
    return float(np.sum((values * m.density * m.chart.weights).ravel()))


def make_sphere_reduction(resolution: int):
    """
    Rotationally symmetric functions on the unit 2-sphere as a weighted
    interval in the polar angle.

    Returns ``(chart, spec, measure)``: nodes at the cell midpoints of
    ``[0, π]`` (so the outermost nodes sit half a cell from the poles),
    F = |dθ| and the normalized measure with density proportional to sin θ.
    The chart metadata records the ambient dimension 2, the ambient Ricci
    curvature 1 and the ambient volume density, which the curvature
    module needs because a one dimensional chart cannot see them.
    """
    if resolution < MIN_SPHERE_RESOLUTION:
        raise ValueError(f"sphere reduction needs at least {MIN_SPHERE_RESOLUTION} cells")

    def log_volume(x):
        return np.log(np.sin(np.asarray(x)[..., 0]))

    chart = Chart.weighted_interval(
        0.0,
        math.pi,
        resolution,
        weight=lambda x: np.sin(x[..., 0]),
        reflecting=True,
        metadata={
            "ambient_dimension": 2,
            "ambient_ricci": 1.0,
            "ambient_log_volume": log_volume,
            "laplacian": "u'' + cot(theta) u'",
        },
        name="sphere-reduction",
    )
    spec = MinkowskiNormSpec.euclidean(1)
    measure = MeasureSpec.from_function(
        chart,
        log_volume,
        normalize=True,
        grad=lambda x: (np.cos(x[..., 0]) / np.sin(x[..., 0]))[..., None],
        name="sphere-volume",
    )
    return chart, spec, measure


def sample_nodes(chart: Chart, count: int, margin: float = 0.0) -> Sequence[tuple]:
    """
    ``count`` node indices spread evenly over the chart, keeping a distance
    ``margin`` from non-periodic ends.
    """
    flat = np.arange(chart.node_count)
    if not chart.periodic and margin > 0.0:
        coords = chart.nodes[..., 0].ravel()
        inside = (coords - chart.lower[0] >= margin) & (chart.upper[0] - coords >= margin)
        flat = flat[inside]
    if len(flat) == 0:
        raise ValueError("no nodes left to sample")
    picks = flat[np.linspace(0, len(flat) - 1, min(count, len(flat))).round().astype(int)]
    return [np.unravel_index(i, chart.shape) for i in picks]
