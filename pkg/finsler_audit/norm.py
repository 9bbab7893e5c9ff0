"""
Minkowski norms on the tangent spaces of a chart.

Everything in this module is vectorized over leading axes: base points
``x`` have shape ``(..., n)``, tangent vectors and covectors have shape
``(..., n)`` and the two broadcast against each other. Riemannian and
Randers norms use closed forms; custom norms fall back to central finite
differences of F^2 in the fibre.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from finsler_audit.constants import (
    ANGLE_STEP,
    ASCENT_MAX_ITER,
    ASCENT_STARTS,
    DEGENERACY_THRESHOLD,
    FD_STEP,
    MAX_BACKTRACK,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    NEWTON_TOL_FD,
    RANDERS_MARGIN,
    STATIONARITY_TOL,
)
from finsler_audit.exceptions import (
    ConvergenceFailure,
    DegenerateDirection,
    NotConvex,
)


class NormKind(str, Enum):
    RIEMANNIAN = "riemannian"
    RANDERS = "randers"
    CUSTOM = "custom"


def _constant_field(value, dimension, rank):
    const = np.asarray(value, dtype=float)
    shape = (dimension,) * rank
    if const.shape != shape:
        raise ValueError(f"expected a constant of shape {shape}, got {const.shape}")

    def field(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(const, x.shape[:-1] + shape)

    return field


@dataclass(frozen=True, eq=False)
class MinkowskiNormSpec:
    """
    A Finsler metric family on a chart.

    ``riemannian_metric`` maps base points ``(..., n)`` to matrices
    ``(..., n, n)``, ``randers_form`` maps them to covectors ``(..., n)``
    and ``custom_eval(x, y)`` returns F itself. Use the classmethod
    constructors rather than building instances directly.
    """

    kind: NormKind
    dimension: int
    riemannian_metric: Optional[Callable] = None
    randers_form: Optional[Callable] = None
    custom_eval: Optional[Callable] = None
    x_independent: bool = False
    name: str = ""

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.kind in (NormKind.RIEMANNIAN, NormKind.RANDERS):
            if self.riemannian_metric is None:
                raise ValueError(f"{self.kind.value} norms need a Riemannian metric")
        if self.kind is NormKind.RANDERS and self.randers_form is None:
            raise ValueError("randers norms need a one-form")
        if self.kind is NormKind.CUSTOM and self.custom_eval is None:
            raise ValueError("custom norms need an evaluation function")

    # ---------------- constructors ----------------

    @classmethod
    def euclidean(cls, dimension: int) -> "MinkowskiNormSpec":
        return cls.riemannian(np.eye(dimension), name="euclidean")

    @classmethod
    def riemannian(cls, metric, dimension: int = None, name: str = "riemannian"):
        if callable(metric):
            if dimension is None:
                raise ValueError("dimension is required for a metric callable")
            return cls(NormKind.RIEMANNIAN, dimension, riemannian_metric=metric, name=name)
        metric = np.atleast_2d(np.asarray(metric, dtype=float))
        dimension = metric.shape[0]
        return cls(
            NormKind.RIEMANNIAN,
            dimension,
            riemannian_metric=_constant_field(metric, dimension, 2),
            x_independent=True,
            name=name,
        )

    @classmethod
    def randers(cls, metric, form, dimension: int = None, name: str = "randers"):
        if callable(metric) or callable(form):
            if dimension is None:
                raise ValueError("dimension is required for field callables")
            if not callable(metric):
                metric = _constant_field(metric, dimension, 2)
            if not callable(form):
                form = _constant_field(form, dimension, 1)
            return cls(
                NormKind.RANDERS,
                dimension,
                riemannian_metric=metric,
                randers_form=form,
                name=name,
            )
        metric = np.atleast_2d(np.asarray(metric, dtype=float))
        dimension = metric.shape[0]
        return cls(
            NormKind.RANDERS,
            dimension,
            riemannian_metric=_constant_field(metric, dimension, 2),
            randers_form=_constant_field(np.atleast_1d(form), dimension, 1),
            x_independent=True,
            name=name,
        )

    @classmethod
    def custom(cls, fn, dimension: int, x_independent: bool = False, name: str = "custom"):
        return cls(
            NormKind.CUSTOM,
            dimension,
            custom_eval=fn,
            x_independent=x_independent,
            name=name,
        )

    # ---------------- field access ----------------

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        if self.riemannian_metric is None:
            return np.broadcast_to(np.eye(self.dimension), x.shape[:-1] + (self.dimension,) * 2)
        return np.asarray(self.riemannian_metric(x), dtype=float)

    def form(self, x):
        x = np.asarray(x, dtype=float)
        if self.randers_form is None:
            return np.zeros(x.shape[:-1] + (self.dimension,))
        return np.asarray(self.randers_form(x), dtype=float)

    def reference_inverse(self, x):
        """Inverse of the Riemannian part, used where no direction is available."""
        return np.linalg.inv(self.metric(x))

    def reversed(self) -> "MinkowskiNormSpec":
        """The reverse metric F(x, -y)."""
        if self.kind is NormKind.RIEMANNIAN:
            return self
        if self.kind is NormKind.RANDERS:
            form = self.randers_form
            return MinkowskiNormSpec(
                NormKind.RANDERS,
                self.dimension,
                riemannian_metric=self.riemannian_metric,
                randers_form=lambda x: -form(x),
                x_independent=self.x_independent,
                name=f"{self.name}-reversed",
            )
        fn = self.custom_eval
        return MinkowskiNormSpec.custom(
            lambda x, y: fn(x, -np.asarray(y)),
            self.dimension,
            x_independent=self.x_independent,
            name=f"{self.name}-reversed",
        )


# ---------------- small tensor helpers ----------------


def _quad(a, y, z=None):
    z = y if z is None else z
    return np.einsum("...i,...ij,...j->...", y, a, z)


def _matvec(a, y):
    return np.einsum("...ij,...j->...i", a, y)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def _length(y):
    return np.linalg.norm(y, axis=-1)


def _fd_step(y, step):
    return step * np.maximum(1.0, _length(y))


def _safe_direction(y):
    """Replace degenerate rows by a unit vector so closed forms stay finite."""
    degenerate = _length(y) <= DEGENERACY_THRESHOLD
    if not np.any(degenerate):
        return y, degenerate
    unit = np.zeros(y.shape[-1])
    unit[0] = 1.0
    return np.where(degenerate[..., None], unit, y), degenerate


def evaluate(spec: MinkowskiNormSpec, x, y):
    """F(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.kind is NormKind.CUSTOM:
        x, y = np.broadcast_arrays(x, y)
        return np.asarray(spec.custom_eval(x, y), dtype=float)
    alpha = np.sqrt(np.maximum(_quad(spec.metric(x), y), 0.0))
    if spec.kind is NormKind.RIEMANNIAN:
        return alpha
    return alpha + _dot(spec.form(x), y)


def _half_gradient_fd(spec, x, y, step=FD_STEP):
    """½ ∂F²/∂y by central differences."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    h = _fd_step(y, step)
    out = np.empty(y.shape)
    for i in range(spec.dimension):
        e = np.zeros(spec.dimension)
        e[i] = 1.0
        shift = h[..., None] * e
        fp = evaluate(spec, x, y + shift) ** 2
        fm = evaluate(spec, x, y - shift) ** 2
        out[..., i] = (fp - fm) / (4.0 * h)
    return out


def _tensor_fd(spec, x, y, step=FD_STEP):
    """½ ∂²F²/∂y∂y by central differences."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    n = spec.dimension
    h = _fd_step(y, step)
    g = np.empty(y.shape + (n,))
    eye = np.eye(n)
    for i in range(n):
        for j in range(i, n):
            ei = h[..., None] * eye[i]
            ej = h[..., None] * eye[j]
            fpp = evaluate(spec, x, y + ei + ej) ** 2
            fpm = evaluate(spec, x, y + ei - ej) ** 2
            fmp = evaluate(spec, x, y - ei + ej) ** 2
            fmm = evaluate(spec, x, y - ei - ej) ** 2
            g[..., i, j] = (fpp - fpm - fmp + fmm) / (8.0 * h**2)
            g[..., j, i] = g[..., i, j]
    return g


def _randers_tensor(spec, x, y):
    a = spec.metric(x)
    b = spec.form(x)
    ay = _matvec(a, y)
    alpha = np.sqrt(_dot(ay, y))
    big_f = alpha + _dot(b, y)
    yhat = ay / alpha[..., None]
    ell = yhat + b
    return (big_f / alpha)[..., None, None] * (
        a - yhat[..., :, None] * yhat[..., None, :]
    ) + ell[..., :, None] * ell[..., None, :]


def fundamental_tensor(spec: MinkowskiNormSpec, x, y, check: bool = True):
    """
    g_ij(x, y) = ½ ∂²F²/∂y^i∂y^j.

    Raises DegenerateDirection for |y| below the degeneracy threshold and
    NotConvex when ``check`` is set and the result is not positive definite.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(_length(y) <= DEGENERACY_THRESHOLD):
        raise DegenerateDirection("fundamental tensor requested at y = 0")

    if spec.kind is NormKind.RIEMANNIAN:
        g = np.broadcast_to(spec.metric(x), np.broadcast_shapes(x.shape, y.shape) + (spec.dimension,))
        return np.array(g)
    if spec.kind is NormKind.RANDERS:
        g = _randers_tensor(spec, x, y)
    else:
        g = _tensor_fd(spec, x, y)

    if check and np.any(np.linalg.eigvalsh(g)[..., 0] <= 0.0):
        raise NotConvex("fundamental tensor is not positive definite")
    return g


def legendre(spec: MinkowskiNormSpec, x, y):
    """
    The Legendre map ξ_i = g_ij(x, y) y^j.

    Degenerate directions map to the zero covector.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y_safe, degenerate = _safe_direction(y)

    if spec.kind is NormKind.RIEMANNIAN:
        xi = _matvec(spec.metric(x), y_safe)
    elif spec.kind is NormKind.RANDERS:
        a = spec.metric(x)
        b = spec.form(x)
        ay = _matvec(a, y_safe)
        alpha = np.sqrt(_dot(ay, y_safe))
        big_f = alpha + _dot(b, y_safe)
        xi = big_f[..., None] * (ay / alpha[..., None] + b)
    else:
        xi = _half_gradient_fd(spec, x, y_safe)

    return np.where(degenerate[..., None], 0.0, xi)


def dual_norm(spec: MinkowskiNormSpec, x, xi):
    """F*(x, ξ) = sup{ξ(y) : F(x, y) = 1}."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)

    if spec.kind is NormKind.CUSTOM:
        return dual_norm_by_ascent(spec, x, xi)

    a = spec.metric(x)
    ainv = np.linalg.inv(a)
    if spec.kind is NormKind.RIEMANNIAN:
        return np.sqrt(np.maximum(_quad(ainv, xi), 0.0))

    # the dual of a Randers norm is again of Randers type
    b = spec.form(x)
    bsharp = _matvec(ainv, b)
    c = 1.0 - _dot(b, bsharp)
    bxi = _dot(bsharp, xi)
    q = c * _quad(ainv, xi) + bxi**2
    return (np.sqrt(np.maximum(q, 0.0)) - bxi) / c


def dual_norm_by_ascent(
    spec: MinkowskiNormSpec,
    x,
    xi,
    starts: int = ASCENT_STARTS,
    max_iter: int = ASCENT_MAX_ITER,
    tol: float = STATIONARITY_TOL,
):
    """
    F*(x, ξ) by maximizing ξ(y) over the unit indicatrix.

    In two dimensions the indicatrix is parametrized by the angle of y and
    each of the ``starts`` initial angles is driven to a stationary point
    by safeguarded Newton ascent; the best stationary value wins.
    """
    x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
    shape = xi.shape[:-1]
    n = spec.dimension

    if n == 1:
        forward = xi[..., 0] / evaluate(spec, x, np.ones_like(xi))
        backward = -xi[..., 0] / evaluate(spec, x, -np.ones_like(xi))
        return np.maximum(forward, backward)

    xs = x.reshape(-1, 1, n)
    xis = xi.reshape(-1, 1, n)
    scale = np.maximum(_length(xis), 1.0)

    def h(theta):
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return _dot(xis, u) / evaluate(spec, xs, u)

    theta = np.broadcast_to(
        2.0 * np.pi * np.arange(starts) / starts, (xs.shape[0], starts)
    ).copy()
    delta = ANGLE_STEP
    for _ in range(max_iter):
        h0 = h(theta)
        hp = h(theta + delta)
        hm = h(theta - delta)
        d1 = (hp - hm) / (2.0 * delta)
        d2 = (hp - 2.0 * h0 + hm) / delta**2
        stationary = np.abs(d1) <= tol * scale
        if np.all(stationary):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d2 < 0.0, -d1 / d2, np.sign(d1) * np.pi / starts)
        step = np.clip(step, -np.pi / starts, np.pi / starts)
        step = np.where(stationary, 0.0, step)
        floor = h0 - 1e-15 * scale
        for _ in range(MAX_BACKTRACK):
            accepted = h(theta + step) >= floor
            if np.all(accepted):
                break
            step = np.where(accepted, step, 0.5 * step)
        theta = theta + step
    else:
        d1 = (h(theta + delta) - h(theta - delta)) / (2.0 * delta)
        stuck = np.any(np.abs(d1) > tol * scale, axis=-1)
        if np.any(stuck):
            raise ConvergenceFailure(
                f"dual norm ascent did not converge in {max_iter} iterations",
                indices=np.flatnonzero(stuck),
            )

    return np.max(h(theta), axis=-1).reshape(shape)


def legendre_inv(
    spec: MinkowskiNormSpec,
    x,
    xi,
    max_iter: int = NEWTON_MAX_ITER,
    tol: float = None,
):
    """
    The unique y with legendre(y) = ξ.

    Closed form for Riemannian norms; damped Newton on g(x, y) y - ξ
    otherwise, started from the inverse of the Riemannian part. Covectors
    below the degeneracy threshold map to the zero vector.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if spec.kind is NormKind.RIEMANNIAN:
        return np.linalg.solve(spec.metric(x), xi[..., None])[..., 0]

    if tol is None:
        tol = NEWTON_TOL if spec.kind is NormKind.RANDERS else NEWTON_TOL_FD

    x, xi = np.broadcast_arrays(x, xi)
    shape = xi.shape
    n = spec.dimension
    xs = x.reshape(-1, n)
    xis = xi.reshape(-1, n)
    scale = _length(xis)
    active = scale > DEGENERACY_THRESHOLD

    y = np.zeros_like(xis)
    if np.any(active):
        y[active] = np.linalg.solve(spec.metric(xs[active]), xis[active][..., None])[..., 0]

    def residual(points, ys, targets):
        return _length(legendre(spec, points, ys) - targets)

    for _ in range(max_iter):
        err = np.where(active, residual(xs, y, xis), 0.0)
        pending = err > tol * scale
        if not np.any(pending):
            break
        px, py, pxi = xs[pending], y[pending], xis[pending]
        current = err[pending]
        g = fundamental_tensor(spec, px, py, check=False)
        step = np.linalg.solve(g, (legendre(spec, px, py) - pxi)[..., None])[..., 0]
        lam = np.ones(len(py))
        for _ in range(MAX_BACKTRACK):
            trial = py - lam[:, None] * step
            improved = residual(px, trial, pxi) < current
            if np.all(improved):
                break
            lam = np.where(improved, lam, 0.5 * lam)
        y[pending] = trial
    else:
        err = np.where(active, residual(xs, y, xis), 0.0)
        stuck = np.flatnonzero(err > tol * scale)
        if len(stuck):
            raise ConvergenceFailure(
                f"Legendre inversion did not converge in {max_iter} Newton steps",
                indices=stuck,
            )

    return y.reshape(shape)


def check_dual_tensor(spec: MinkowskiNormSpec, x, y, step: float = FD_STEP):
    """
    Max-entry difference between ½ ∂²F*²/∂ξ∂ξ at ξ = legendre(y) and the
    inverse of the fundamental tensor at y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xi = legendre(spec, x, y)
    x, xi = np.broadcast_arrays(x, xi)
    n = spec.dimension
    h = _fd_step(xi, step)
    eye = np.eye(n)
    gstar = np.empty(xi.shape + (n,))
    for i in range(n):
        for j in range(i, n):
            ei = h[..., None] * eye[i]
            ej = h[..., None] * eye[j]
            fpp = dual_norm(spec, x, xi + ei + ej) ** 2
            fpm = dual_norm(spec, x, xi + ei - ej) ** 2
            fmp = dual_norm(spec, x, xi - ei + ej) ** 2
            fmm = dual_norm(spec, x, xi - ei - ej) ** 2
            gstar[..., i, j] = (fpp - fpm - fmp + fmm) / (8.0 * h**2)
            gstar[..., j, i] = gstar[..., i, j]
    ginv = np.linalg.inv(fundamental_tensor(spec, x, y))
    return float(np.max(np.abs(gstar - ginv)))


def reversibility(spec: MinkowskiNormSpec, x, samples: int = 720):
    """λ_F(x) = sup F(x, -y) / F(x, y)."""
    x = np.asarray(x, dtype=float)
    if spec.kind is NormKind.RIEMANNIAN:
        return np.ones(x.shape[:-1])
    if spec.kind is NormKind.RANDERS:
        bnorm = np.sqrt(_quad(np.linalg.inv(spec.metric(x)), spec.form(x)))
        return (1.0 + bnorm) / (1.0 - bnorm)
    if spec.dimension == 1:
        one = np.ones(x.shape)
        ratio = evaluate(spec, x, -one) / evaluate(spec, x, one)
        return np.maximum(ratio, 1.0 / ratio)
    theta = 2.0 * np.pi * np.arange(samples) / samples
    u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    xs = x[..., None, :]
    return np.max(evaluate(spec, xs, -u) / evaluate(spec, xs, u), axis=-1)


def validate(spec: MinkowskiNormSpec, points, directions: int = 16):
    """Raise NotConvex unless the norm is a strongly convex Minkowski norm at ``points``."""
    points = np.asarray(points, dtype=float).reshape(-1, spec.dimension)

    if spec.kind is not NormKind.CUSTOM:
        a = spec.metric(points)
        if not np.allclose(a, np.swapaxes(a, -1, -2)):
            raise NotConvex("Riemannian metric is not symmetric")
        if np.any(np.linalg.eigvalsh(a)[..., 0] <= 0.0):
            raise NotConvex("Riemannian metric is not positive definite")
    if spec.kind is NormKind.RANDERS:
        bnorm = np.sqrt(_quad(np.linalg.inv(a), spec.form(points)))
        if np.any(bnorm > 1.0 - RANDERS_MARGIN):
            raise NotConvex(f"Randers form too long: max |b| = {bnorm.max():.6g}")

    if spec.dimension == 1:
        u = np.array([[1.0], [-1.0]])
    else:
        theta = 2.0 * np.pi * (np.arange(directions) + 0.5) / directions
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    xs = points[:, None, :]
    base = evaluate(spec, xs, u)
    if np.any(base <= 0.0):
        raise NotConvex("norm vanishes on a nonzero direction")
    for lam in (0.5, 3.0):
        scaled = evaluate(spec, xs, lam * u)
        if np.any(np.abs(scaled - lam * base) > 1e-10 * lam * base):
            raise NotConvex("norm is not positively homogeneous")
    if spec.kind is NormKind.CUSTOM:
        fundamental_tensor(spec, xs, u, check=True)
