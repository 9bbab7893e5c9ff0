"""
First and second order operators of a Finsler metric-measure chart.

The nonlinear gradient is taken node by node through the inverse Legendre
map; divergence, Laplacian and the linearized operators are assembled from
the chart stencils of ``finsler_audit.mesh``. Nodes where the differential
is numerically zero form the complement of M_u and are masked: the
gradient is zero there and pointwise quantities are not evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from finsler_audit.constants import (
    COLLAR_WIDTH,
    DEGENERATE_FRACTION,
    GRAD_THRESHOLD,
)
from finsler_audit.exceptions import ConvergenceFailure, DegenerateReference, InvalidParameter
from finsler_audit.mesh import (
    MeasureSpec,
    ScalarField,
    VectorField,
    derivative,
    integrate,
    partial_derivatives,
    values_of,
)
from finsler_audit.norm import (
    MinkowskiNormSpec,
    dual_norm,
    evaluate,
    fundamental_tensor,
    legendre_inv,
)


@dataclass(frozen=True, eq=False)
class OperatorContext:
    spec: MinkowskiNormSpec
    measure: MeasureSpec
    eps_grad: Optional[float] = None

    def __post_init__(self):
        if self.spec.dimension != self.chart.dimension:
            raise ValueError(
                f"norm dimension {self.spec.dimension} != chart dimension {self.chart.dimension}"
            )
        if self.eps_grad is not None and self.eps_grad <= 0.0:
            raise ValueError("eps_grad must be positive")

    @property
    def chart(self):
        return self.measure.chart

    @property
    def nodes(self):
        return self.chart.nodes

    def threshold(self, values) -> float:
        """Degeneracy cut for the differential of a field with these values."""
        if self.eps_grad is not None:
            return self.eps_grad
        return GRAD_THRESHOLD * float(np.max(np.abs(values), initial=0.0))

    def scalar(self, values, name="u", mask=None) -> ScalarField:
        return ScalarField(self.chart, values, mask=mask, name=name)

    def integrate(self, f) -> float:
        return integrate(f, self.measure)


def differential(ctx: OperatorContext, u) -> np.ndarray:
    """Node components ∂u/∂x^i."""
    values = values_of(ctx.chart, u)
    return partial_derivatives(ctx.scalar(values), 1)


def hessian(ctx: OperatorContext, u) -> np.ndarray:
    """Coordinate second derivatives ∂²u/∂x^i∂x^j."""
    values = values_of(ctx.chart, u)
    return partial_derivatives(ctx.scalar(values), 2)


def gradient(ctx: OperatorContext, u) -> VectorField:
    values = values_of(ctx.chart, u)
    du = differential(ctx, values)
    x = ctx.nodes
    mask = dual_norm(ctx.spec, x, du) > ctx.threshold(values)

    grad = np.zeros_like(du)
    if np.any(mask):
        try:
            grad[mask] = legendre_inv(ctx.spec, x[mask], du[mask])
        except ConvergenceFailure as exc:
            nodes = np.argwhere(mask)[np.asarray(exc.indices, dtype=int)]
            raise ConvergenceFailure(
                f"gradient: Legendre inversion failed at nodes {nodes.tolist()[:5]}",
                indices=nodes,
            ) from exc
    return VectorField(ctx.chart, grad, mask=mask, name="grad")


def divergence(ctx: OperatorContext, V) -> ScalarField:
    """div_m V = Σ ∂V^i/∂x^i + V^i ∂Φ/∂x^i."""
    values = values_of(ctx.chart, V)
    total = np.einsum("...i,...i->...", values, ctx.measure.grad_phi)
    for i in range(ctx.chart.dimension):
        total = total + derivative(ctx.chart, values[..., i], i, parity="odd")
    return ScalarField(ctx.chart, total, name="div")


def laplacian(ctx: OperatorContext, u) -> ScalarField:
    lap = divergence(ctx, gradient(ctx, u))
    return ScalarField(ctx.chart, lap.values, name="laplacian")


def weak_laplacian_residual(ctx: OperatorContext, u, phi) -> float:
    """
    ∫ φ Δu dm + ∫ dφ(∇u) dm, which vanishes up to discretization error.

    On bounded charts φ must vanish in a collar of ``COLLAR_WIDTH`` cells.
    """
    phi = values_of(ctx.chart, phi)
    collar = ctx.chart.collar(COLLAR_WIDTH)
    if np.any(np.abs(phi[collar]) > 1e-14 * max(1.0, float(np.max(np.abs(phi))))):
        raise InvalidParameter(f"test function must vanish within {COLLAR_WIDTH} cells of the boundary")

    grad = gradient(ctx, u)
    lap = divergence(ctx, grad)
    dphi = differential(ctx, phi)
    return ctx.integrate(phi * lap.values) + ctx.integrate(
        np.einsum("...i,...i->...", dphi, grad.values)
    )


def _reference_mask(ctx, V):
    if isinstance(V, VectorField) and V.mask is not None:
        return V.mask
    values = values_of(ctx.chart, V)
    speed = evaluate(ctx.spec, ctx.nodes, values)
    return speed > ctx.threshold(speed)


def fundamental_field(ctx: OperatorContext, V) -> np.ndarray:
    """g_ij(x, V(x)) node-wise; the Riemannian part where V is masked."""
    values = values_of(ctx.chart, V)
    mask = _reference_mask(ctx, V)
    g = np.array(np.broadcast_to(ctx.spec.metric(ctx.nodes), values.shape + (ctx.chart.dimension,)))
    if np.any(mask):
        g[mask] = fundamental_tensor(ctx.spec, ctx.nodes[mask], values[mask], check=False)
    return g


def weighted_inner(ctx: OperatorContext, V, X, Y) -> np.ndarray:
    """g_V(X, Y) node-wise."""
    g = fundamental_field(ctx, V)
    return np.einsum("...i,...ij,...j->...", values_of(ctx.chart, X), g, values_of(ctx.chart, Y))


def _linearized_gradient(ctx, V, f, strict):
    values = values_of(ctx.chart, V)
    f_values = values_of(ctx.chart, f)
    mask = _reference_mask(ctx, V)
    df = differential(ctx, f_values)

    if strict:
        active = np.linalg.norm(df, axis=-1) > ctx.threshold(f_values)
        bad = np.count_nonzero(active & ~mask)
        if bad > DEGENERATE_FRACTION * ctx.chart.node_count:
            raise DegenerateReference(
                f"df is nonzero on {bad} nodes where the reference field vanishes"
            )

    out = np.zeros_like(df)
    if np.any(mask):
        g = fundamental_tensor(ctx.spec, ctx.nodes[mask], values[mask], check=False)
        out[mask] = np.linalg.solve(g, df[mask][..., None])[..., 0]
    return VectorField(ctx.chart, out, mask=mask, name="linearized_grad")


def linearized_gradient(ctx: OperatorContext, V, f, strict: bool = True) -> VectorField:
    """
    ∇^V f = g^{ij}(x, V) ∂f/∂x^j where F(V) is above the degeneracy cut,
    zero elsewhere. With ``strict`` set, raises DegenerateReference when df
    is nonzero on too many nodes where V vanishes.
    """
    return _linearized_gradient(ctx, V, f, strict=strict)


def linearized_laplacian(ctx: OperatorContext, V, f, strict: bool = True) -> ScalarField:
    """Δ^V f = div_m(∇^V f)."""
    lap = divergence(ctx, linearized_gradient(ctx, V, f, strict=strict))
    return ScalarField(ctx.chart, lap.values, name="linearized_laplacian")


def gamma2(ctx: OperatorContext, u) -> ScalarField:
    """Γ₂(u) = Δ^{∇u}[F²(∇u)/2] - d(Δu)(∇u) on the unmasked nodes."""
    grad = gradient(ctx, u)
    half_square = 0.5 * evaluate(ctx.spec, ctx.nodes, grad.values) ** 2
    first = divergence(ctx, _linearized_gradient(ctx, grad, half_square, strict=False))
    lap = divergence(ctx, grad)
    second = np.einsum("...i,...i->...", differential(ctx, lap.values), grad.values)
    values = np.where(grad.mask, first.values - second, 0.0)
    return ScalarField(ctx.chart, values, mask=grad.mask, name="gamma2")


def gradient_norm_correction(ctx: OperatorContext, u, grad: Optional[VectorField] = None):
    """
    The two forms of the Bochner correction term on the unmasked nodes:
    ``d[F(∇u)](∇^{∇u}F(∇u))`` and ``g_{∇u}(∇^{∇u}F(∇u), ∇^{∇u}F(∇u))``.
    Pass ``grad`` when ∇u is already at hand.
    """
    if grad is None:
        grad = gradient(ctx, u)
    speed = evaluate(ctx.spec, ctx.nodes, grad.values)
    lin = _linearized_gradient(ctx, grad, speed, strict=False)
    directional = np.einsum("...i,...i->...", differential(ctx, speed), lin.values)
    squared = weighted_inner(ctx, grad, lin, lin)
    return (
        np.where(grad.mask, directional, 0.0),
        np.where(grad.mask, squared, 0.0),
        grad.mask,
    )


# ---------------- weak linearized operator ----------------


def _one_sided(n, h, periodic, forward):
    ones = np.ones(n) / h
    if forward:
        d = sp.diags([-ones, ones[:-1]], [0, 1], shape=(n, n), format="lil")
        if periodic:
            d[n - 1, 0] = 1.0 / h
        else:
            d[n - 1, n - 1] = 0.0
    else:
        d = sp.diags([ones, -ones[:-1]], [0, -1], shape=(n, n), format="lil")
        if periodic:
            d[0, n - 1] = -1.0 / h
        else:
            d[0, 0] = 0.0
    return d.tocsr()


def _difference_matrices(chart, forward):
    mats = [
        _one_sided(n, h, chart.periodic, forward)
        for n, h in zip(chart.resolution, chart.spacing)
    ]
    if chart.dimension == 1:
        return mats
    eye_x = sp.identity(chart.resolution[0], format="csr")
    eye_y = sp.identity(chart.resolution[1], format="csr")
    return [sp.kron(mats[0], eye_y, format="csr"), sp.kron(eye_x, mats[1], format="csr")]


def mass_matrix(ctx: OperatorContext):
    return sp.diags((ctx.chart.weights * ctx.measure.density).ravel(), format="csr")


def linearized_operator(ctx: OperatorContext, V=None):
    """
    Weak form of -Δ^V as ``(stiffness, mass)`` sparse matrices.

    stiffness = ½ Σ_{s=±} D_sᵀ W A D_s with one-sided differences D_±,
    W the quadrature weights times e^Φ and A = g^{-1}(x, V) node-wise
    (the inverse Riemannian part at masked nodes, or everywhere when
    ``V`` is None). One-sided rows vanish at the ends of bounded charts,
    which gives the natural reflecting boundary condition.
    """
    chart = ctx.chart
    n = chart.dimension
    x = ctx.nodes
    if V is None:
        inverse = np.linalg.inv(ctx.spec.metric(x))
    else:
        inverse = np.linalg.inv(fundamental_field(ctx, V))
    inverse = np.broadcast_to(inverse, chart.shape + (n, n)).reshape(-1, n, n)
    w = (chart.weights * ctx.measure.density).ravel()

    stiffness = sp.csr_matrix((chart.node_count, chart.node_count))
    for forward in (True, False):
        d = _difference_matrices(chart, forward)
        for k in range(n):
            for l in range(n):
                coeff = sp.diags(w * inverse[:, k, l], format="csr")
                stiffness = stiffness + 0.5 * (d[k].T @ coeff @ d[l])
    return stiffness.tocsr(), mass_matrix(ctx)
