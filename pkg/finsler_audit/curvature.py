"""
Geodesics, Ricci and weighted Ricci curvature, and distance functions.

Derivatives of the spray are taken with batched 4th-order stencils, so
every routine here accepts stacks of base points and directions.
One dimensional charts have no Ricci curvature of their own; charts that
reduce a higher dimensional space carry the ambient values in their
metadata (``ambient_ricci``, ``ambient_dimension``, ``ambient_log_volume``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from finsler_audit.calculus import OperatorContext, divergence, gradient
from finsler_audit.constants import (
    COLLAR_WIDTH,
    GEODESIC_HALF_LENGTH,
    GEODESIC_STEPS,
    MIN_RICCI_SAMPLES,
    RICCI_STEP,
    S_CURVATURE_ZERO,
    SPEED_DRIFT_TOL,
    SPRAY_STEP,
)
from finsler_audit.exceptions import (
    DegenerateDirection,
    IntegrationBlowup,
    InvalidParameter,
    UnsupportedChart,
)
from finsler_audit.mesh import Chart, MeasureSpec, ScalarField, VectorField
from finsler_audit.norm import (
    MinkowskiNormSpec,
    dual_norm,
    evaluate,
    fundamental_tensor,
    legendre,
)

_FIRST = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))
_SECOND = (
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
)


def _d1(fn, base, direction, step):
    step = np.asarray(step, dtype=float)[..., None]
    total = sum(w * fn(base + s * step * direction) for s, w in _FIRST)
    return total / _expand(step[..., 0], total)


def _d2(fn, base, direction, step):
    step = np.asarray(step, dtype=float)[..., None]
    total = sum(w * fn(base + s * step * direction) for s, w in _SECOND)
    return total / _expand(step[..., 0], total) ** 2


def _expand(step, like):
    step = np.asarray(step, dtype=float)
    while step.ndim < np.ndim(like):
        step = step[..., None]
    return step


# ---------------- spray and geodesics ----------------


def spray_coefficients(spec: MinkowskiNormSpec, x, y, step: float = SPRAY_STEP):
    """
    G^i(x, y) = ¼ g^{il}([F²]_{x^k y^l} y^k - [F²]_{x^l}).

    Uses [F²]_{y^l} = 2 ξ_l with ξ the Legendre image of y.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    if spec.x_independent:
        return np.zeros(y.shape)
    n = spec.dimension
    eye = np.eye(n)
    rhs = np.zeros(y.shape)
    for k in range(n):
        dxi = _d1(lambda p: legendre(spec, p, y), x, eye[k], step)
        rhs += 2.0 * dxi * y[..., k : k + 1]
        rhs[..., k] -= _d1(lambda p: evaluate(spec, p, y) ** 2, x, eye[k], step)
    g = fundamental_tensor(spec, x, y, check=False)
    return 0.25 * np.linalg.solve(g, rhs[..., None])[..., 0]


@dataclass(frozen=True)
class GeodesicPath:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    @property
    def start(self):
        return self.positions[len(self.times) // 2]

    @property
    def initial_velocity(self):
        return self.velocities[len(self.times) // 2]


def _rk4(spec, x, v, dt, steps):
    xs, vs = [x], [v]

    def accel(p, q):
        return -2.0 * spray_coefficients(spec, p, q)

    for _ in range(steps):
        k1x, k1v = v, accel(x, v)
        k2x, k2v = v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = v + dt * k3v, accel(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        xs.append(x)
        vs.append(v)
    return xs, vs


def spray_and_geodesic(
    spec: MinkowskiNormSpec,
    x0,
    v0,
    eps: float = GEODESIC_HALF_LENGTH,
    steps: int = GEODESIC_STEPS,
) -> GeodesicPath:
    """
    The geodesic η with η(0) = x0, η̇(0) = v0 on the uniform grid
    ``t_k = k eps / steps`` for ``|k| <= steps``; integrates ẍ = -2G(x, ẋ)
    forwards and backwards with classical RK4. Batched over leading axes.
    """
    x0, v0 = np.broadcast_arrays(np.asarray(x0, float), np.asarray(v0, float))
    if np.any(np.linalg.norm(v0, axis=-1) == 0.0):
        raise DegenerateDirection("geodesic needs a nonzero initial velocity")
    dt = eps / steps
    fx, fv = _rk4(spec, x0, v0, dt, steps)
    bx, bv = _rk4(spec, x0, v0, -dt, steps)
    positions = np.stack(bx[:0:-1] + fx)
    velocities = np.stack(bv[:0:-1] + fv)
    times = dt * np.arange(-steps, steps + 1)

    speed = evaluate(spec, positions, velocities)
    drift = np.max(np.abs(speed / speed[steps] - 1.0))
    if drift > SPEED_DRIFT_TOL:
        raise IntegrationBlowup(f"geodesic speed drifted by {drift:.3e} (relative)")
    return GeodesicPath(times, positions, velocities)


# ---------------- Ricci curvature ----------------


def _ricci_trace(spec, x, y, step):
    """Ric(y) = R^i_i from the spray; x, y of shape (m, n)."""
    n = spec.dimension
    eye = np.eye(n)
    hx = step
    hy = step * np.linalg.norm(y, axis=-1)

    def spray(p, q):
        return spray_coefficients(spec, p, q)

    g0 = spray(x, y)
    dgdy = [_d1(lambda q: spray(x, q), y, eye[j], hy) for j in range(n)]
    dgdx = [_d1(lambda p: spray(p, y), x, eye[k], hx) for k in range(n)]
    d2yy = [[None] * n for _ in range(n)]
    for j in range(n):
        d2yy[j][j] = _d2(lambda q: spray(x, q), y, eye[j], hy)
        for k in range(j + 1, n):
            d2yy[j][k] = _d1(
                lambda q: _d1(lambda r: spray(x, r), q, eye[k], hy), y, eye[j], hy
            )
            d2yy[k][j] = d2yy[j][k]
    d2xy = [
        [_d1(lambda p: _d1(lambda q: spray(p, q), y, eye[k], hy), x, eye[j], hx) for k in range(n)]
        for j in range(n)
    ]

    ric = np.zeros(len(x))
    for k in range(n):
        ric += 2.0 * dgdx[k][..., k]
        for j in range(n):
            ric -= y[..., j] * d2xy[j][k][..., k]
            ric += 2.0 * g0[..., j] * d2yy[j][k][..., k]
            ric -= dgdy[j][..., k] * dgdy[k][..., j]
    return ric


def ricci(spec: MinkowskiNormSpec, x, v, chart: Optional[Chart] = None, step: float = RICCI_STEP):
    """
    Ric(x, v). One dimensional charts report the ambient value
    ``ambient_ricci * F²(v)`` from the chart metadata, or 0.
    """
    x, v = np.broadcast_arrays(np.asarray(x, float), np.asarray(v, float))
    shape = v.shape[:-1]
    if chart is not None and "ambient_ricci" in chart.metadata:
        return chart.metadata["ambient_ricci"] * evaluate(spec, x, v) ** 2
    if spec.dimension == 1 or spec.x_independent:
        return np.zeros(shape)
    flat_x = x.reshape(-1, spec.dimension)
    flat_v = v.reshape(-1, spec.dimension)
    return _ricci_trace(spec, flat_x, flat_v, step).reshape(shape)


# ---------------- S-curvature and weighted Ricci ----------------


def _log_volume_ratio(spec, m, path):
    """ψ(t) = ½ log det g(η, η̇) + log ν(η) - Φ(η)."""
    g = fundamental_tensor(spec, path.positions, path.velocities, check=False)
    psi = 0.5 * np.log(np.linalg.det(g)) - m.phi(path.positions)
    ambient = m.chart.metadata.get("ambient_log_volume")
    if ambient is not None:
        psi = psi + ambient(path.positions)
    return psi


def s_curvature_and_psi(
    spec: MinkowskiNormSpec,
    m: MeasureSpec,
    x,
    v,
    eps: float = GEODESIC_HALF_LENGTH,
    steps: int = GEODESIC_STEPS,
):
    """(ψ′(0), ψ″(0)) by 5-point differences on the geodesic grid."""
    path = spray_and_geodesic(spec, x, v, eps, steps)
    psi = _log_volume_ratio(spec, m, path)
    tau = eps / steps
    c = steps
    first = (-psi[c + 2] + 8.0 * psi[c + 1] - 8.0 * psi[c - 1] + psi[c - 2]) / (12.0 * tau)
    second = (
        -psi[c + 2] + 16.0 * psi[c + 1] - 30.0 * psi[c] + 16.0 * psi[c - 1] - psi[c - 2]
    ) / (12.0 * tau**2)
    return first, second


def ambient_dimension(spec: MinkowskiNormSpec, chart: Chart) -> int:
    return int(chart.metadata.get("ambient_dimension", spec.dimension))


def weighted_ricci_value(ricci_value, psi_prime, psi_second, big_n, n):
    """Ric_N from its ingredients; ``big_n = inf`` gives Ric_∞."""
    if math.isinf(big_n):
        return ricci_value + psi_second
    if 0 < big_n < n:
        raise InvalidParameter(f"N must lie outside (0, {n}), got {big_n}")
    if big_n == n:
        ric_inf = ricci_value + psi_second
        return np.where(np.abs(psi_prime) <= S_CURVATURE_ZERO, ric_inf, -np.inf)
    return ricci_value + psi_second - psi_prime**2 / (big_n - n)


@dataclass
class WeightedRicciReport:
    point: np.ndarray
    direction: np.ndarray
    ricci: float
    psi_prime: float
    psi_second: float
    ric_n: dict = field(default_factory=dict)
    ric_inf: float = 0.0
    ratio: float = 0.0

    def as_row(self) -> dict:
        row = {f"x{i}": float(c) for i, c in enumerate(self.point)}
        row.update({f"v{i}": float(c) for i, c in enumerate(self.direction)})
        row.update(
            ric=self.ricci,
            psi_prime=self.psi_prime,
            psi_second=self.psi_second,
            ric_inf=self.ric_inf,
            ratio=self.ratio,
        )
        row.update({f"ric_{big_n:g}": value for big_n, value in self.ric_n.items()})
        return row


def _weighted_ricci_batch(spec, m, x, v, n_list, eps, steps):
    ric = ricci(spec, x, v, chart=m.chart)
    psi_prime, psi_second = s_curvature_and_psi(spec, m, x, v, eps, steps)
    n = ambient_dimension(spec, m.chart)
    ric_inf = ric + psi_second
    ric_n = {big_n: weighted_ricci_value(ric, psi_prime, psi_second, big_n, n) for big_n in n_list}
    ratio = ric_inf / evaluate(spec, x, v) ** 2
    return ric, psi_prime, psi_second, ric_n, ric_inf, ratio


def weighted_ricci(
    spec: MinkowskiNormSpec,
    m: MeasureSpec,
    x,
    v,
    n_list=(math.inf,),
    eps: float = GEODESIC_HALF_LENGTH,
    steps: int = GEODESIC_STEPS,
) -> WeightedRicciReport:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ric, p1, p2, ric_n, ric_inf, ratio = _weighted_ricci_batch(spec, m, x, v, n_list, eps, steps)
    return WeightedRicciReport(
        point=x,
        direction=v,
        ricci=float(ric),
        psi_prime=float(p1),
        psi_second=float(p2),
        ric_n={big_n: float(value) for big_n, value in ric_n.items()},
        ric_inf=float(ric_inf),
        ratio=float(ratio),
    )


def _sample_directions(spec, m, samples, eps):
    chart = m.chart
    if spec.dimension == 1:
        per_point = 2
        angles = None
    else:
        per_point = 8
        angles = 2.0 * np.pi * np.arange(per_point) / per_point
    count = -(-samples // per_point)

    flat = chart.nodes.reshape(-1, chart.dimension)
    inside = np.ones(len(flat), dtype=bool)
    if not chart.periodic:
        margin = 3.0 * eps
        for i in range(chart.dimension):
            inside &= (flat[:, i] - chart.lower[i] >= margin) & (chart.upper[i] - flat[:, i] >= margin)
    candidates = flat[inside]
    if len(candidates) == 0:
        raise InvalidParameter("chart too small for curvature sampling")
    picks = np.linspace(0, len(candidates) - 1, min(count, len(candidates))).round().astype(int)
    points = candidates[picks]

    if angles is None:
        units = np.array([[1.0], [-1.0]])
    else:
        units = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    x = np.repeat(points, per_point, axis=0)
    u = np.tile(units, (len(points), 1))
    v = u / evaluate(spec, x, u)[:, None]
    return x, v


def ricci_samples(
    spec: MinkowskiNormSpec,
    m: MeasureSpec,
    samples: int = 200,
    n_list=(math.inf,),
    eps: float = GEODESIC_HALF_LENGTH,
    steps: int = GEODESIC_STEPS,
):
    """Weighted Ricci reports at ``samples`` node and F-unit direction pairs."""
    if samples < MIN_RICCI_SAMPLES:
        raise InvalidParameter(f"curvature scans need at least {MIN_RICCI_SAMPLES} samples")
    x, v = _sample_directions(spec, m, samples, eps)
    ric, p1, p2, ric_n, ric_inf, ratio = _weighted_ricci_batch(spec, m, x, v, n_list, eps, steps)
    return [
        WeightedRicciReport(
            point=x[i],
            direction=v[i],
            ricci=float(ric[i]),
            psi_prime=float(p1[i]),
            psi_second=float(p2[i]),
            ric_n={big_n: float(value[i]) for big_n, value in ric_n.items()},
            ric_inf=float(ric_inf[i]),
            ratio=float(ratio[i]),
        )
        for i in range(len(x))
    ]


def ric_bound_scan(
    spec: MinkowskiNormSpec,
    m: MeasureSpec,
    samples: int = 200,
    eps: float = GEODESIC_HALF_LENGTH,
) -> float:
    """min Ric_∞(v) / F²(v) over the sampled pairs."""
    reports = ricci_samples(spec, m, samples, eps=eps)
    return min(r.ratio for r in reports)


# ---------------- distance functions ----------------


@dataclass(frozen=True, eq=False)
class DistanceField:
    base: tuple
    distance: ScalarField
    gradient: VectorField
    laplacian: ScalarField
    eikonal_residual: float


def distance_field(ctx: OperatorContext, p) -> DistanceField:
    """
    r = d(p, ·) from the node ``p`` with ∇r, the classical Δr (node p
    excluded, given by its mask) and the eikonal residual max |F*(dr) - 1|
    over nodes with r > 3h away from the chart edges.

    One dimensional charts integrate F(s, ±1) outwards from p; x-independent
    norms use r(x) = F(x - p). Periodic charts measure displacement inside
    the fundamental domain.
    """
    chart, spec = ctx.chart, ctx.spec
    p = tuple(int(i) for i in np.atleast_1d(p))
    base = chart.nodes[p]

    if chart.dimension == 1:
        s = chart.axes[0]
        forward = cumulative_trapezoid(evaluate(spec, s[:, None], np.ones((len(s), 1))), s, initial=0.0)
        backward = cumulative_trapezoid(evaluate(spec, s[:, None], -np.ones((len(s), 1))), s, initial=0.0)
        j = p[0]
        r = np.where(np.arange(len(s)) >= j, forward - forward[j], backward[j] - backward)
    elif spec.x_independent:
        r = evaluate(spec, base, chart.nodes - base)
    else:
        raise UnsupportedChart("distance fields need a one dimensional chart or an x-independent norm")

    distance = ScalarField(chart, r, name="r")
    grad = gradient(ctx, distance)
    mask = grad.mask.copy()
    mask[p] = False
    lap = divergence(ctx, grad)
    laplacian_field = ScalarField(chart, np.where(mask, lap.values, 0.0), mask=mask, name="laplacian_r")

    far = (r > 3.0 * max(chart.spacing)) & ~_edge_band(chart, COLLAR_WIDTH)
    if np.any(far):
        dr = np.stack(
            [np.gradient(r, *chart.spacing, edge_order=2)] if chart.dimension == 1
            else np.gradient(r, *chart.spacing, edge_order=2),
            axis=-1,
        )
        residual = float(np.max(np.abs(dual_norm(spec, chart.nodes[far], dr[far]) - 1.0)))
    else:
        residual = 0.0
    return DistanceField(p, distance, grad, laplacian_field, residual)


def _edge_band(chart, width):
    band = np.zeros(chart.shape, dtype=bool)
    for axis in range(chart.dimension):
        index = [slice(None)] * chart.dimension
        index[axis] = slice(0, width)
        band[tuple(index)] = True
        index[axis] = slice(-width, None)
        band[tuple(index)] = True
    return band
