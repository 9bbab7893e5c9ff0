"""
Checkers for the Bochner, Poincaré, log-Sobolev and volume inequalities
and for the operator identities behind them.

Every checker returns an InequalityReport whose ``margin`` is positive on
the satisfied side: ``rhs - lhs`` for "<=" claims, ``lhs - rhs`` for ">="
claims and ``-residual`` for "==" claims. A report passes iff
``margin >= -tolerance``. Tolerances are always passed in by the caller.
"""
from __future__ import annotations

import functools
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from rich.console import Console as RichConsole
from scipy import ndimage

from finsler_audit.calculus import (
    OperatorContext,
    differential,
    divergence,
    gamma2,
    gradient,
    gradient_norm_correction,
    hessian,
    laplacian,
    linearized_gradient,
    linearized_laplacian,
    weak_laplacian_residual,
    weighted_inner,
)
from finsler_audit.constants import (
    CERTIFY_SLACK,
    COLLAR_WIDTH,
    DUAL_TENSOR_TOL,
    IDENTITY_FRACTION,
    LOGSOBOLEV_FLOOR,
    MAX_EXPONENT,
    POSITIVITY_FLOOR,
    STENCIL_REACH,
)
from finsler_audit.curvature import (
    ambient_dimension,
    distance_field,
    ric_bound_scan,
    ricci_samples,
)
from finsler_audit.exceptions import (
    HypothesisUnverified,
    InvalidParameter,
    NotPositive,
    OverflowRange,
    UnsupportedChart,
)
from finsler_audit.heatflow import (
    HeatTrajectory,
    correction_integral,
    decay_rate,
    entropy,
    phi_diagnostics,
    require_normalized,
    solve_heat,
    spectral_gap,
    variance,
)
from finsler_audit.mesh import derivative, values_of
from finsler_audit.norm import (
    NormKind,
    check_dual_tensor,
    dual_norm,
    evaluate,
    legendre,
    legendre_inv,
)

logger = RichConsole(file=sys.stderr)

LE, GE, EQ = "<=", ">=", "=="


@dataclass
class InequalityReport:
    claim: str
    relation: str
    lhs: float
    rhs: float
    margin: float
    tolerance: float
    passed: bool
    scenario: str = ""
    worst_node: Optional[tuple] = None
    divergent: bool = False
    informational: bool = False
    runtime: float = 0.0
    details: dict = field(default_factory=dict)
    error: Optional[str] = None

    def as_row(self) -> dict:
        return {
            "claim": self.claim,
            "scenario": self.scenario,
            "relation": self.relation,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "informational": self.informational,
            "error": self.error or "",
        }


def make_report(claim, relation, lhs, rhs, tol, margin=None, **extra) -> InequalityReport:
    if tol < 0.0:
        raise InvalidParameter("tolerance must be nonnegative")
    lhs, rhs = float(lhs), float(rhs)
    if margin is None:
        if relation == LE:
            margin = rhs - lhs
        elif relation == GE:
            margin = lhs - rhs
        else:
            margin = -abs(lhs - rhs)
    margin = float(margin)
    divergent = extra.pop("divergent", False) or not (math.isfinite(lhs) and math.isfinite(rhs))
    ok = extra.pop("ok", True)
    passed = bool(ok and not math.isnan(margin) and margin >= -tol)
    return InequalityReport(
        claim=claim,
        relation=relation,
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        tolerance=float(tol),
        passed=passed,
        divergent=divergent,
        **extra,
    )


def error_report(claim: str, exc: BaseException, scenario: str = "") -> InequalityReport:
    return InequalityReport(
        claim=claim,
        relation=EQ,
        lhs=math.nan,
        rhs=math.nan,
        margin=math.nan,
        tolerance=0.0,
        passed=False,
        scenario=scenario,
        error=f"{type(exc).__name__}: {exc}",
    )


def timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        report = fn(*args, **kwargs)
        report.runtime = time.perf_counter() - start
        logger.log(
            f"{report.claim}: lhs={report.lhs:.6g} rhs={report.rhs:.6g} "
            f"margin={report.margin:.3e} passed={report.passed}"
        )
        return report

    return wrapper


# ---------------- helpers ----------------


def certify(ctx: OperatorContext, K: float, certified_k: Optional[float] = None) -> float:
    """Sampled lower Ricci bound; raises HypothesisUnverified when K exceeds it."""
    if certified_k is None:
        certified_k = ric_bound_scan(ctx.spec, ctx.measure)
    if K > certified_k + CERTIFY_SLACK * max(1.0, abs(K)):
        raise HypothesisUnverified(
            f"requested K = {K:g} exceeds the sampled bound {certified_k:.6g}"
        )
    return certified_k


def _region(ctx, mask):
    """Nodes where pointwise checks are evaluated."""
    chart = ctx.chart
    if chart.periodic or chart.reflecting:
        return mask
    return mask & ~chart.collar(COLLAR_WIDTH)


def _identity_region(ctx, grad, fraction):
    """
    Nodes at least ``STENCIL_REACH`` cells from any masked node where
    F(∇u) is at least ``fraction`` of its maximum.
    """
    mode = "wrap" if ctx.chart.periodic else "nearest"
    near_masked = ndimage.maximum_filter(
        (~grad.mask).astype(np.uint8), size=2 * STENCIL_REACH + 1, mode=mode
    ).astype(bool)
    speed = evaluate(ctx.spec, ctx.nodes, grad.values)
    strong = speed >= fraction * float(np.max(speed, initial=0.0))
    return _region(ctx, ~near_masked & strong & grad.mask)


def _worst(values, region):
    masked = np.where(region, values, np.inf)
    index = np.unravel_index(int(np.argmin(masked)), masked.shape)
    return index, float(masked[index])


def _residual(a, b, region):
    """Worst |a - b| over the region, relative to max(1, max |b|)."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    mask = region.reshape(region.shape + (1,) * (b.ndim - region.ndim))
    scale = max(1.0, float(np.max(np.abs(np.where(mask, b, 0.0)), initial=0.0)))
    diff = np.where(mask, np.abs(a - b), 0.0)
    if diff.ndim > region.ndim:
        diff = np.max(diff, axis=tuple(range(region.ndim, diff.ndim)))
    index = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return index, float(diff[index]) / scale


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


# ---------------- Bochner family ----------------

BOCHNER_VARIANTS = {
    "plain": "bochner-plain",
    "improved": "bochner-improved",
    "gamma2": "bochner-gamma2",
    "dimensional": "bochner-dimensional",
}


@timed
def check_bochner_pointwise(
    ctx: OperatorContext,
    u,
    K: float,
    variant: str,
    tol: float,
    certified_k: Optional[float] = None,
) -> InequalityReport:
    """
    Γ₂(u) >= K F²(∇u) + correction at every unmasked node. The correction
    is 0 (plain), d[F(∇u)](∇^{∇u}F(∇u)) (improved),
    g_{∇u}(∇^{∇u}F(∇u), ∇^{∇u}F(∇u)) (gamma2) or (Δu)²/N with N the
    dimension (dimensional, Riemannian charts with the volume measure).
    The two forms of the gradient-norm correction must agree to 1e-8.
    """
    if variant not in BOCHNER_VARIANTS:
        raise InvalidParameter(f"unknown Bochner variant '{variant}'")
    claim = BOCHNER_VARIANTS[variant]
    certified_k = certify(ctx, K, certified_k)
    if variant == "dimensional" and ctx.spec.kind is not NormKind.RIEMANNIAN:
        raise UnsupportedChart("the dimensional Bochner inequality is checked on Riemannian charts")

    values = values_of(ctx.chart, u)
    grad = gradient(ctx, values)
    region = _region(ctx, grad.mask)
    if not np.any(region):
        return make_report(claim, GE, 0.0, 0.0, tol, details={"empty": True, "certified_k": certified_k})

    gam = gamma2(ctx, values).values
    speed_sq = evaluate(ctx.spec, ctx.nodes, grad.values) ** 2
    directional, squared, _ = gradient_norm_correction(ctx, values, grad=grad)
    coincidence = float(np.max(np.abs(np.where(region, directional - squared, 0.0))))
    scale = 1.0 + float(np.max(np.abs(np.where(region, squared, 0.0))))

    if variant == "plain":
        correction = np.zeros_like(gam)
    elif variant == "improved":
        correction = directional
    elif variant == "gamma2":
        correction = squared
    else:
        lap = divergence(ctx, grad).values
        correction = lap**2 / ambient_dimension(ctx.spec, ctx.chart)

    rhs = K * speed_sq + correction
    node, margin = _worst(gam - rhs, region)
    return make_report(
        claim,
        GE,
        gam[node],
        rhs[node],
        tol,
        margin=margin,
        worst_node=tuple(int(i) for i in node),
        ok=coincidence <= 1e-8 * scale,
        details={
            "certified_k": certified_k,
            "masked_nodes": int(np.count_nonzero(~grad.mask)),
            "correction_coincidence": coincidence,
        },
    )


@timed
def check_bochner_integrated(
    ctx: OperatorContext, u, phi, K: float, tol: float, certified_k: Optional[float] = None
) -> InequalityReport:
    """
    -∫ dφ(∇^{∇u}[F²(∇u)/2]) dm >= ∫ φ {d(Δu)(∇u) + K F²(∇u) + dF(∇u)(∇^{∇u}F(∇u))} dm
    for a nonnegative test function φ.
    """
    certified_k = certify(ctx, K, certified_k)
    values = values_of(ctx.chart, u)
    phi = values_of(ctx.chart, phi)
    if np.any(phi < 0.0):
        raise InvalidParameter("test function must be nonnegative")
    collar = ctx.chart.collar(COLLAR_WIDTH)
    if np.any(np.abs(phi[collar]) > 1e-14 * max(1.0, float(np.max(phi)))):
        raise InvalidParameter(f"test function must vanish within {COLLAR_WIDTH} cells of the boundary")

    grad = gradient(ctx, values)
    speed = evaluate(ctx.spec, ctx.nodes, grad.values)
    lin = linearized_gradient(ctx, grad, 0.5 * speed**2, strict=False)
    lhs = -ctx.integrate(_dot(differential(ctx, phi), lin.values))

    lap = divergence(ctx, grad).values
    directional, _, _ = gradient_norm_correction(ctx, values, grad=grad)
    integrand = _dot(differential(ctx, lap), grad.values) + K * speed**2 + directional
    rhs = ctx.integrate(phi * np.where(grad.mask, integrand, 0.0))
    return make_report("bochner-integrated", GE, lhs, rhs, tol, details={"certified_k": certified_k})


@timed
def check_bochner_identity(ctx: OperatorContext, u, tol: float) -> InequalityReport:
    """Γ₂(u) = ‖Hess u‖²_HS - ∇²Φ(∇u, ∇u) on constant-coefficient Riemannian charts."""
    if ctx.spec.kind is not NormKind.RIEMANNIAN or not ctx.spec.x_independent:
        raise UnsupportedChart("the Bochner identity is checked on flat Riemannian charts")
    values = values_of(ctx.chart, u)
    grad = gradient(ctx, values)
    region = _region(ctx, grad.mask)
    ainv = ctx.spec.reference_inverse(ctx.nodes)
    hess = hessian(ctx, values)
    mixed = np.einsum("...ij,...jk->...ik", ainv, hess)
    hs = np.einsum("...ij,...ji->...", mixed, mixed)
    grad_phi = ctx.measure.grad_phi
    n = ctx.chart.dimension
    hess_phi = np.stack(
        [
            np.stack([derivative(ctx.chart, grad_phi[..., i], j, parity="odd") for j in range(n)], axis=-1)
            for i in range(n)
        ],
        axis=-2,
    )
    ric_inf = -np.einsum("...i,...ij,...j->...", grad.values, hess_phi, grad.values)
    gam = gamma2(ctx, values).values
    node, residual = _residual(gam, hs + ric_inf, region)
    return make_report(
        "bochner-identity",
        EQ,
        gam[node],
        (hs + ric_inf)[node],
        tol,
        margin=-residual,
        worst_node=tuple(int(i) for i in node),
    )


# ---------------- Poincaré, energy and log-Sobolev ----------------


def _require_positive_k(K):
    if K <= 0.0:
        raise InvalidParameter("this inequality needs K > 0")


@timed
def check_energy_laplacian_bound(
    ctx: OperatorContext, u, K: float, tol: float, certified_k: Optional[float] = None
) -> InequalityReport:
    """∫F²(∇u) dm <= (1/K) {∫(Δu)² dm - ∫ g_{∇u}(∇^{∇u}F(∇u), ∇^{∇u}F(∇u)) dm}."""
    _require_positive_k(K)
    certified_k = certify(ctx, K, certified_k)
    require_normalized(ctx.measure)
    values = values_of(ctx.chart, u)
    grad = gradient(ctx, values)
    lhs = ctx.integrate(evaluate(ctx.spec, ctx.nodes, grad.values) ** 2)
    lap_sq = ctx.integrate(divergence(ctx, grad).values ** 2)
    _, squared, _ = gradient_norm_correction(ctx, values, grad=grad)
    g_term = ctx.integrate(squared)
    rhs = (lap_sq - g_term) / K
    return make_report(
        "energy-laplacian-bound",
        LE,
        lhs,
        rhs,
        tol,
        details={"laplacian_sq": lap_sq, "correction": g_term, "certified_k": certified_k},
    )


@timed
def check_poincare(
    ctx: OperatorContext,
    f,
    K: float,
    tol: float,
    with_correction: bool = False,
    certified_k: Optional[float] = None,
    trajectory: Optional[HeatTrajectory] = None,
    horizon: float = 5.0,
    dt: Optional[float] = None,
) -> InequalityReport:
    """
    Var_m(f) <= (1/K) ∫F²(∇f) dm, optionally tightened by
    (2/K) ∫_0^∞∫ g(t) dm dt along the heat flow started at f.
    """
    _require_positive_k(K)
    certified_k = certify(ctx, K, certified_k)
    values = values_of(ctx.chart, f)
    lhs = variance(ctx.measure, values)
    grad = gradient(ctx, values)
    plain = ctx.integrate(evaluate(ctx.spec, ctx.nodes, grad.values) ** 2) / K
    details = {"plain_rhs": plain, "certified_k": certified_k}
    if not with_correction:
        return make_report("poincare", LE, lhs, plain, tol, details=details)

    if trajectory is None:
        trajectory = solve_heat(ctx, values, horizon, dt, store_fields=False, label="poincare")
    correction = correction_integral(ctx, trajectory)
    rhs = plain - 2.0 * correction / K
    details.update(correction=correction, dominates_plain=bool(rhs <= plain))
    return make_report("poincare-corrected", LE, lhs, rhs, tol, ok=rhs <= plain, details=details)


@timed
def check_logsobolev(
    ctx: OperatorContext, f, K: float, tol: float, certified_k: Optional[float] = None
) -> InequalityReport:
    """Ent_m(f m) <= (1/2K) ∫ F²(∇f)/f dm; nodes with f below 1e-12 are left out of the right side."""
    _require_positive_k(K)
    certified_k = certify(ctx, K, certified_k)
    values = values_of(ctx.chart, f)
    lhs = entropy(ctx.measure, values)
    grad = gradient(ctx, values)
    keep = values >= LOGSOBOLEV_FLOOR
    excluded = ctx.integrate(np.where(keep, 0.0, values))
    if not np.all(keep):
        logger.log(f"log-sobolev: {np.count_nonzero(~keep)} nodes excluded, mass {excluded:.3e}")
    fisher = np.where(keep, evaluate(ctx.spec, ctx.nodes, grad.values) ** 2 / np.where(keep, values, 1.0), 0.0)
    rhs = ctx.integrate(fisher) / (2.0 * K)
    return make_report(
        "log-sobolev",
        LE,
        lhs,
        rhs,
        tol,
        details={"excluded_mass": excluded, "certified_k": certified_k},
    )


@timed
def check_gamma2_scaling(
    ctx: OperatorContext, h, a: float, tol: float, region_fraction: float = 0.1
) -> InequalityReport:
    """
    Γ₂(e^{ah}) = a² e^{2ah} {Γ₂(h) + a d[F²(∇h)](∇h) + a² F⁴(∇h)} node-wise,
    together with ∇e^{ah} = a e^{ah} ∇h and Δe^{ah} = a e^{ah}(Δh + a F²(∇h)).
    Evaluated where F*(dh) is at least ``region_fraction`` of its maximum.
    """
    if not 0.0 < a <= 10.0:
        raise InvalidParameter("a must lie in (0, 10]")
    values = values_of(ctx.chart, h)
    if 2.0 * a * float(np.max(values)) > MAX_EXPONENT:
        raise OverflowRange(f"e^(2ah) overflows for a = {a:g}")

    exp_ah = np.exp(a * values)
    grad_h = gradient(ctx, values)
    grad_e = gradient(ctx, exp_ah)
    strength = dual_norm(ctx.spec, ctx.nodes, differential(ctx, values))
    region = _region(ctx, grad_h.mask & grad_e.mask)
    region &= strength >= region_fraction * float(np.max(strength, initial=0.0))
    if not np.any(region):
        return make_report("gamma2-scaling", EQ, 0.0, 0.0, tol, details={"empty": True})

    speed_sq = evaluate(ctx.spec, ctx.nodes, grad_h.values) ** 2
    d_speed_sq = _dot(differential(ctx, speed_sq), grad_h.values)
    lhs = gamma2(ctx, exp_ah).values
    rhs = a**2 * exp_ah**2 * (gamma2(ctx, values).values + a * d_speed_sq + a**2 * speed_sq**2)
    node, residual = _residual(lhs, rhs, region)

    _, grad_residual = _residual(grad_e.values, a * exp_ah[..., None] * grad_h.values, region)
    lap_h = divergence(ctx, grad_h).values
    _, lap_residual = _residual(
        divergence(ctx, grad_e).values, a * exp_ah * (lap_h + a * speed_sq), region
    )
    worst = max(residual, grad_residual, lap_residual)
    return make_report(
        "gamma2-scaling",
        EQ,
        lhs[node],
        rhs[node],
        tol,
        margin=-worst,
        worst_node=tuple(int(i) for i in node),
        details={
            "a": a,
            "gamma2_residual": residual,
            "gradient_residual": grad_residual,
            "laplacian_residual": lap_residual,
        },
    )


@timed
def check_entropy_condition(ctx: OperatorContext, u, C: float, tol: float) -> InequalityReport:
    """∫ u F²(∇ log u) dm <= C ∫ u Γ₂(log u) dm for positive u."""
    values = values_of(ctx.chart, u)
    if float(np.min(values)) < POSITIVITY_FLOOR:
        raise NotPositive(f"u must stay above {POSITIVITY_FLOOR:g}, min is {np.min(values):.3g}")
    w = np.log(values)
    grad = gradient(ctx, w)
    gam = gamma2(ctx, w).values
    region = _region(ctx, np.ones(ctx.chart.shape, dtype=bool))
    speed_sq = evaluate(ctx.spec, ctx.nodes, grad.values) ** 2
    lhs = ctx.integrate(np.where(region, values * speed_sq, 0.0))
    rhs = C * ctx.integrate(np.where(region, values * gam, 0.0))
    return make_report("entropy-condition", LE, lhs, rhs, tol, details={"C": C})


# ---------------- volume of geodesic balls ----------------


def _ball_weights(r, radius):
    edge = np.abs(r - radius) <= 1e-12 * max(1.0, radius)
    return np.where(edge, 0.5, np.where(r < radius, 1.0, 0.0))


@timed
def check_volume_bound(
    ctx: OperatorContext,
    p,
    R: float,
    K: float,
    r_min: Sequence[float],
    tol: float,
    distributional: bool = False,
    certified_k: Optional[float] = None,
) -> InequalityReport:
    """
    vol(B_p(R)) <= (1/K) ∫_{B_p(R)} (Δr)² dm with the classical Δr,
    integrated over r > r_min for each exclusion radius. The report is
    informational: it carries the signed margin at the smallest r_min,
    ``excess = lhs - rhs``, and the slope of the right side against
    log(1/r_min) next to the slope a 1/r singularity of Δr would give.
    With ``distributional`` set the point mass of Δr at p makes the right
    side infinite.
    """
    _require_positive_k(K)
    certified_k = certify(ctx, K, certified_k)
    radii = sorted(float(r) for r in r_min)
    h = max(ctx.chart.spacing)
    if radii[0] < 3.0 * h * (1.0 - 1e-9):
        raise InvalidParameter(f"exclusion radius must be at least 3h = {3.0 * h:g}")

    dist = distance_field(ctx, p)
    r = dist.distance.values
    ball = _ball_weights(r, R)
    lhs = ctx.integrate(ball)

    lap_sq = dist.laplacian.values**2
    rhs_by_radius = {
        rho: ctx.integrate(np.where(r > rho, ball * lap_sq, 0.0)) / K for rho in radii
    }
    rhs = rhs_by_radius[radii[0]]

    n = ambient_dimension(ctx.spec, ctx.chart)
    density_at_p = float(ctx.measure.density[dist.base])
    expected_slope = (n - 1) ** 2 * 2.0 * math.pi * density_at_p / K if n == 2 else 0.0
    slope = float(np.polyfit(np.log(1.0 / np.array(radii)), [rhs_by_radius[x] for x in radii], 1)[0])

    details = {
        "radius": R,
        "rhs_by_r_min": {f"{rho:.6g}": value for rho, value in rhs_by_radius.items()},
        "excess": lhs - rhs,
        "slope": slope,
        "expected_slope": expected_slope,
        "eikonal_residual": dist.eikonal_residual,
        "certified_k": certified_k,
    }
    if distributional:
        details["classical_rhs"] = rhs
        rhs = math.inf
    return make_report(
        f"volume-bound[R={R:g}]",
        LE,
        lhs,
        rhs,
        tol,
        informational=True,
        divergent=distributional,
        details=details,
    )


# ---------------- curvature and duality ----------------


@timed
def check_spectral_gap(ctx: OperatorContext, K: float, tol: float) -> InequalityReport:
    """Smallest nonzero eigenvalue of the reference operator >= K."""
    gap = spectral_gap(ctx)
    return make_report("spectral-gap", GE, gap, K, tol)


@timed
def check_ricci_certificate(
    ctx: OperatorContext, K: float, tol: float, samples: int = 200
) -> InequalityReport:
    """
    min Ric_∞(v)/F²(v) >= K over the sampled pairs, and Ric_N
    nondecreasing in N on every sample.
    """
    n = ambient_dimension(ctx.spec, ctx.chart)
    n_list = (n + 1, n + 2, n + 4, math.inf)
    reports = ricci_samples(ctx.spec, ctx.measure, samples, n_list=n_list)
    k_est = min(r.ratio for r in reports)
    monotone = all(
        all(a <= b + 1e-9 * max(1.0, abs(b)) for a, b in zip(seq, seq[1:]))
        for seq in ([r.ric_n[big_n] for big_n in n_list] for r in reports)
    )
    return make_report(
        "ricci-certificate",
        GE,
        k_est,
        K,
        tol,
        ok=monotone,
        details={"samples": len(reports), "monotone_in_n": monotone},
    )


@timed
def check_duality(
    ctx: OperatorContext,
    tol: float,
    samples: int = 1000,
    seed: int = 0,
    tensor_tol: float = DUAL_TENSOR_TOL,
) -> InequalityReport:
    """Legendre round trip, F*(L(y)) = F(y) and tensor duality on random node directions."""
    rng = np.random.default_rng(seed)
    flat = ctx.nodes.reshape(-1, ctx.chart.dimension)
    x = flat[rng.integers(0, len(flat), samples)]
    y = rng.normal(size=(samples, ctx.chart.dimension))
    y *= rng.uniform(0.1, 10.0, size=(samples, 1)) / np.linalg.norm(y, axis=-1, keepdims=True)

    xi = legendre(ctx.spec, x, y)
    back = legendre_inv(ctx.spec, x, xi)
    round_trip = float(np.max(np.linalg.norm(back - y, axis=-1) / np.linalg.norm(y, axis=-1)))
    speed = evaluate(ctx.spec, x, y)
    norm_error = float(np.max(np.abs(dual_norm(ctx.spec, x, xi) - speed) / speed))
    picks = slice(0, min(samples, 32))
    tensor = check_dual_tensor(ctx.spec, x[picks], y[picks] / speed[picks, None])
    residual = max(round_trip, norm_error)
    return make_report(
        "duality",
        EQ,
        residual,
        0.0,
        tol,
        margin=-residual,
        ok=tensor <= tensor_tol,
        details={
            "round_trip": round_trip,
            "norm_preservation": norm_error,
            "tensor_residual": tensor,
            "samples": samples,
        },
    )


# ---------------- operator identities ----------------


@timed
def check_gradient_identity(ctx: OperatorContext, u, tol: float) -> InequalityReport:
    """∇^{∇u}u = ∇u and Δ^{∇u}u = Δu, plus du(∇u) = F²(∇u) = F*²(du)."""
    values = values_of(ctx.chart, u)
    grad = gradient(ctx, values)
    region = _region(ctx, grad.mask)
    if not np.any(region):
        return make_report("gradient-identity", EQ, 0.0, 0.0, tol, details={"empty": True})
    lin = linearized_gradient(ctx, grad, values)
    node, grad_residual = _residual(lin.values, grad.values, region)
    _, lap_residual = _residual(
        linearized_laplacian(ctx, grad, values).values, divergence(ctx, grad).values, region
    )
    du = differential(ctx, values)
    pairing = _dot(du, grad.values)
    _, eikonal = _residual(pairing, evaluate(ctx.spec, ctx.nodes, grad.values) ** 2, region)
    _, dual = _residual(pairing, dual_norm(ctx.spec, ctx.nodes, du) ** 2, region)
    worst = max(grad_residual, lap_residual)
    return make_report(
        "gradient-identity",
        EQ,
        worst,
        0.0,
        tol,
        margin=-worst,
        ok=max(eikonal, dual) <= 1e-6,
        worst_node=tuple(int(i) for i in node),
        details={
            "gradient_residual": grad_residual,
            "laplacian_residual": lap_residual,
            "pairing_residual": max(eikonal, dual),
        },
    )


@timed
def check_linearized_symmetry(ctx: OperatorContext, u, f1, f2, tol: float) -> InequalityReport:
    """df₂(∇^{∇u}f₁) = df₁(∇^{∇u}f₂) on the nodes where ∇u is unmasked."""
    grad = gradient(ctx, u)
    region = _region(ctx, grad.mask)
    lin1 = linearized_gradient(ctx, grad, f1, strict=False)
    lin2 = linearized_gradient(ctx, grad, f2, strict=False)
    left = _dot(differential(ctx, f2), lin1.values)
    right = _dot(differential(ctx, f1), lin2.values)
    node, residual = _residual(left, right, region)
    return make_report(
        "linearized-symmetry", EQ, left[node], right[node], tol, margin=-residual,
        worst_node=tuple(int(i) for i in node),
    )


@timed
def check_product_rule(
    ctx: OperatorContext, u, phi, tol: float, region_fraction: float = IDENTITY_FRACTION
) -> InequalityReport:
    """
    div_m(φ∇u) = φΔu + dφ(∇u) node-wise, away from the critical points of u
    (see ``_identity_region``).
    """
    phi = values_of(ctx.chart, phi)
    grad = gradient(ctx, u)
    region = _identity_region(ctx, grad, region_fraction)
    if not np.any(region):
        return make_report("product-rule", EQ, 0.0, 0.0, tol, details={"empty": True})
    left = divergence(ctx, phi[..., None] * grad.values).values
    right = phi * divergence(ctx, grad).values + _dot(differential(ctx, phi), grad.values)
    node, residual = _residual(left, right, region)
    return make_report(
        "product-rule", EQ, left[node], right[node], tol, margin=-residual,
        worst_node=tuple(int(i) for i in node),
        details={"region_nodes": int(np.count_nonzero(region))},
    )


@timed
def check_chain_rule(
    ctx: OperatorContext, u, f, tol: float, region_fraction: float = IDENTITY_FRACTION
) -> InequalityReport:
    """
    Δ^{∇u}f² = 2fΔ^{∇u}f + 2g_{∇u}(∇^{∇u}f, ∇^{∇u}f) node-wise, away from the
    critical points of u.
    """
    f = values_of(ctx.chart, f)
    grad = gradient(ctx, u)
    region = _identity_region(ctx, grad, region_fraction)
    if not np.any(region):
        return make_report("chain-rule", EQ, 0.0, 0.0, tol, details={"empty": True})
    left = linearized_laplacian(ctx, grad, f**2, strict=False).values
    lin = linearized_gradient(ctx, grad, f, strict=False)
    lap = divergence(ctx, lin).values
    right = 2.0 * f * lap + 2.0 * weighted_inner(ctx, grad, lin, lin)
    node, residual = _residual(left, right, region)
    return make_report(
        "chain-rule", EQ, left[node], right[node], tol, margin=-residual,
        worst_node=tuple(int(i) for i in node),
        details={"region_nodes": int(np.count_nonzero(region))},
    )


@timed
def check_weak_laplacian(ctx: OperatorContext, u, phi, tol: float) -> InequalityReport:
    """∫φΔu dm + ∫dφ(∇u) dm = 0, relative to ‖u‖‖φ‖."""
    values = values_of(ctx.chart, u)
    phi = values_of(ctx.chart, phi)
    residual = weak_laplacian_residual(ctx, values, phi)
    scale = math.sqrt(ctx.integrate(values**2) * ctx.integrate(phi**2))
    relative = abs(residual) / scale if scale > 0.0 else abs(residual)
    pointwise = ctx.integrate(phi * laplacian(ctx, values).values)
    return make_report(
        "weak-laplacian",
        EQ,
        pointwise,
        pointwise - residual,
        tol,
        margin=-relative,
        details={"residual": residual},
    )


@timed
def check_heat_diagnostics(
    ctx: OperatorContext,
    tol: float,
    trajectory: Optional[HeatTrajectory] = None,
    u0=None,
    horizon: float = 1.0,
    dt: Optional[float] = None,
) -> InequalityReport:
    """
    Φ′ = -4E and Φ″ = 4∫(Δu)² along the flow (relative, within 5 dt), with
    per-step mass drift and energy increase bounded by ``tol``.
    """
    if trajectory is None:
        trajectory = solve_heat(ctx, u0, horizon, dt, store_fields=False, label="diagnostics")
    diag = phi_diagnostics(trajectory)
    worst = max(diag.first_residual, diag.second_residual)
    scale = max(1.0, abs(float(trajectory.mass[0])))
    conserved = diag.mass_drift <= 1e-10 * scale and diag.energy_increase <= tol
    return make_report(
        "heat-diagnostics",
        EQ,
        worst,
        0.0,
        diag.tolerance,
        margin=-worst,
        ok=conserved,
        details={
            "phi_first_residual": diag.first_residual,
            "phi_second_residual": diag.second_residual,
            "mass_drift": diag.mass_drift,
            "energy_increase": diag.energy_increase,
            "decay_rate": decay_rate(trajectory),
            "spectral_gap": trajectory.spectral_gap,
            "ergodic": trajectory.ergodic,
        },
    )
