"""
The nonlinear heat flow ∂_t u = Δu and the functionals it is audited with.

Each step freezes the reference field V = ∇u and solves the symmetric
system (M + dt K_V) u' = M u, where K_V is the weak form of -Δ^V (see
``calculus.linearized_operator``); since Δ^{∇u}u = Δu this is a
semi-implicit step of the nonlinear flow.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from rich.console import Console as RichConsole
from scipy.integrate import trapezoid
from scipy.sparse import diags
from scipy.sparse.linalg import cg, eigsh

from finsler_audit.calculus import (
    OperatorContext,
    differential,
    divergence,
    gradient,
    gradient_norm_correction,
    linearized_operator,
)
from finsler_audit.constants import (
    DENSITY_FLOOR,
    DENSITY_MASS_TOL,
    ERGODIC_SLACK,
    NORMALIZATION_TOL,
    SOLVER_MAX_ITER,
    SOLVER_RESIDUAL,
    TAIL_MATERIALITY,
    TAIL_MISMATCH,
)
from finsler_audit.exceptions import (
    InvalidParameter,
    NotDensity,
    NotNormalized,
    SolverStall,
    TailNotResolved,
)
from finsler_audit.mesh import MeasureSpec, integrate, values_of
from finsler_audit.norm import NormKind, dual_norm

logger = RichConsole(file=sys.stderr)


# ---------------- functionals ----------------


def energy(ctx: OperatorContext, u) -> float:
    """E(u) = ½ ∫ F*(x, du)² dm."""
    du = differential(ctx, u)
    return 0.5 * ctx.integrate(dual_norm(ctx.spec, ctx.nodes, du) ** 2)


def sobolev_norm(ctx: OperatorContext, u) -> float:
    """‖u‖²_{L²} + ∫ F*(du)² dm."""
    values = values_of(ctx.chart, u)
    return ctx.integrate(values**2) + 2.0 * energy(ctx, values)


def require_normalized(m: MeasureSpec):
    if not m.normalized or abs(m.total_mass - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"measure has total mass {m.total_mass:.12g}, expected 1")


def variance(m: MeasureSpec, f) -> float:
    require_normalized(m)
    values = values_of(m.chart, f)
    mean = integrate(values, m)
    return integrate(values**2, m) - mean**2


def entropy(m: MeasureSpec, f) -> float:
    """Ent_m(f m) = ∫ f log f dm for a probability density f."""
    values = values_of(m.chart, f)
    if np.any(values < 0.0):
        raise NotDensity(f"density is negative at {np.count_nonzero(values < 0.0)} nodes")
    mass = integrate(values, m)
    if abs(mass - 1.0) > DENSITY_MASS_TOL:
        raise NotDensity(f"density integrates to {mass:.12g}, expected 1")
    safe = np.where(values > DENSITY_FLOOR, values, 1.0)
    return integrate(np.where(values > DENSITY_FLOOR, values * np.log(safe), 0.0), m)


# ---------------- time stepping ----------------


def heat_step(
    ctx: OperatorContext,
    u,
    dt: float,
    residual: float = SOLVER_RESIDUAL,
    max_iter: int = SOLVER_MAX_ITER,
    operator=None,
) -> np.ndarray:
    """
    One semi-implicit step; returns the new node values.

    ``operator`` may carry a prebuilt ``(stiffness, mass)`` pair. The mass
    lost to the solver residual is restored by a constant shift.
    """
    if dt <= 0.0:
        raise InvalidParameter("dt must be positive")
    values = values_of(ctx.chart, u)
    if operator is None:
        operator = linearized_operator(ctx, gradient(ctx, values))
    stiffness, mass = operator

    flat = values.ravel()
    system = (mass + dt * stiffness).tocsr()
    rhs = mass @ flat
    jacobi = diags(1.0 / system.diagonal())
    new, info = cg(system, rhs, x0=flat.copy(), rtol=residual, maxiter=max_iter, M=jacobi)
    if info > 0:
        raise SolverStall(f"heat step solve did not reach {residual:g} in {max_iter} iterations")
    if info < 0:
        raise InvalidParameter("heat step system is not usable by the solver")

    weights = mass.diagonal()
    shift = (weights @ flat - weights @ new) / weights.sum()
    return (new + shift).reshape(ctx.chart.shape)


def spectral_gap(ctx: OperatorContext) -> float:
    """
    Smallest nonzero eigenvalue of the weak operator built on the
    Riemannian part of the metric.
    """
    stiffness, mass = linearized_operator(ctx, None)
    size = stiffness.shape[0]
    v0 = np.linspace(-1.0, 1.0, size) + 0.5
    values = eigsh(
        stiffness, k=3, M=mass, sigma=-1.0, which="LM", v0=v0, return_eigenvectors=False
    )
    return float(np.sort(values)[1])


@dataclass
class HeatTrajectory:
    times: np.ndarray
    dt: float
    mass: np.ndarray
    energy: np.ndarray
    phi: np.ndarray
    laplacian_sq: np.ndarray
    g_integral: np.ndarray
    deviation: np.ndarray
    fields: list = field(default_factory=list)
    spectral_gap: Optional[float] = None
    ergodic_bound: Optional[float] = None
    ergodic: Optional[bool] = None
    label: str = "heat"

    def __len__(self):
        return len(self.times)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "mass": self.mass,
                "energy": self.energy,
                "phi": self.phi,
                "laplacian_sq": self.laplacian_sq,
                "g_integral": self.g_integral,
                "deviation": self.deviation,
            }
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _diagnostics(ctx, values, total_mass):
    grad = gradient(ctx, values)
    lap = divergence(ctx, grad)
    _, squared, _ = gradient_norm_correction(ctx, values, grad=grad)
    mass = ctx.integrate(values)
    mean = mass / total_mass
    return (
        grad,
        mass,
        energy(ctx, values),
        ctx.integrate(values**2),
        ctx.integrate(lap.values**2),
        ctx.integrate(squared),
        math.sqrt(max(ctx.integrate((values - mean) ** 2), 0.0)),
    )


def solve_heat(
    ctx: OperatorContext,
    u0,
    horizon: float,
    dt: Optional[float] = None,
    residual: float = SOLVER_RESIDUAL,
    store_fields: bool = True,
    label: str = "heat",
) -> HeatTrajectory:
    """
    Run the flow from ``u0`` to ``horizon`` with fixed step ``dt``
    (default ``min(1e-3, h)``), recording mass, energy, Φ(t) = ∫u², ∫(Δu)²
    and ∫g(t) dm at every step.

    Ergodicity against the measured spectral gap is recorded on the
    trajectory (and logged) once the horizon covers five relaxation times.
    """
    if horizon <= 0.0:
        raise InvalidParameter("horizon must be positive")
    if dt is None:
        dt = min(1e-3, min(ctx.chart.spacing))
    steps = max(int(round(horizon / dt)), 1)
    values = np.array(values_of(ctx.chart, u0), dtype=float)
    total_mass = ctx.measure.total_mass

    logger.log(f"heat flow '{label}': {steps} steps of {dt:g} on {ctx.chart.describe()}")
    frozen = None
    if ctx.spec.kind is NormKind.RIEMANNIAN:
        # g does not depend on the direction, so neither does the operator
        frozen = linearized_operator(ctx, None)

    records = []
    fields = []
    for k in range(steps + 1):
        grad, *row = _diagnostics(ctx, values, total_mass)
        records.append(row)
        if store_fields:
            fields.append(values.copy())
        if k == steps:
            break
        operator = frozen if frozen is not None else linearized_operator(ctx, grad)
        values = heat_step(ctx, values, dt, residual=residual, operator=operator)

    columns = np.array(records).T
    traj = HeatTrajectory(
        times=dt * np.arange(steps + 1),
        dt=dt,
        mass=columns[0],
        energy=columns[1],
        phi=columns[2],
        laplacian_sq=columns[3],
        g_integral=columns[4],
        deviation=columns[5],
        fields=fields,
        label=label,
    )
    _record_ergodicity(ctx, traj)
    return traj


def _record_ergodicity(ctx, traj):
    gap = spectral_gap(ctx)
    traj.spectral_gap = gap
    horizon = traj.times[-1]
    if gap <= 0.0 or horizon < 5.0 / gap:
        logger.log(f"heat flow '{traj.label}': horizon {horizon:g} too short for an ergodicity check")
        return
    rate = math.log1p(gap * traj.dt) / traj.dt
    traj.ergodic_bound = ERGODIC_SLACK * traj.deviation[0] * math.exp(-rate * horizon)
    traj.ergodic = bool(traj.deviation[-1] <= traj.ergodic_bound)
    logger.log(
        f"heat flow '{traj.label}': |u_T - mean| = {traj.deviation[-1]:.3e}, "
        f"bound {traj.ergodic_bound:.3e} (gap {gap:.6g}), ergodic={traj.ergodic}"
    )


# ---------------- trajectory diagnostics ----------------


@dataclass(frozen=True)
class PhiDiagnostics:
    first_residual: float
    second_residual: float
    tolerance: float
    mass_drift: float
    energy_increase: float

    @property
    def passed(self) -> bool:
        return self.first_residual <= self.tolerance and self.second_residual <= self.tolerance


def _relative(numeric, expected, floor):
    scale = np.maximum(np.abs(expected), floor)
    return float(np.max(np.abs(numeric - expected) / scale, initial=0.0))


def phi_diagnostics(traj: HeatTrajectory) -> PhiDiagnostics:
    """
    Compare central time differences of Φ(t) = ∫u_t² dm with -4E(u_t)
    and 4∫(Δu_t)² dm; residuals are relative, the tolerance is 5 dt.
    """
    if len(traj) < 5:
        raise InvalidParameter("phi diagnostics need at least five samples")
    dt = traj.dt
    phi = traj.phi
    first = (phi[2:] - phi[:-2]) / (2.0 * dt)
    second = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / dt**2
    floor = 1e-12 * max(1.0, float(phi[0]))
    return PhiDiagnostics(
        first_residual=_relative(first, -4.0 * traj.energy[1:-1], floor),
        second_residual=_relative(second, 4.0 * traj.laplacian_sq[1:-1], floor),
        tolerance=5.0 * dt,
        mass_drift=float(np.max(np.abs(np.diff(traj.mass)), initial=0.0)),
        energy_increase=float(np.max(np.diff(traj.energy), initial=0.0)),
    )


def decay_rate(traj: HeatTrajectory) -> float:
    """Least-squares exponential rate of ‖u_t - mean‖."""
    deviation = traj.deviation
    usable = deviation > 1e-12 * max(float(deviation[0]), DENSITY_FLOOR)
    if np.count_nonzero(usable) < 2:
        return math.inf
    slope, _ = np.polyfit(traj.times[usable], np.log(deviation[usable]), 1)
    return float(-slope)


def correction_integral(ctx: OperatorContext, traj: HeatTrajectory) -> float:
    """
    ∫_0^∞ ∫_M g(t) dm dt: trapezoid rule over the trajectory plus an
    exponential tail fitted to the last tenth of the samples.
    """
    g = traj.g_integral
    times = traj.times
    if float(np.max(g)) <= 1e-12 * (1.0 + 2.0 * traj.energy[0]):
        return 0.0

    body = float(trapezoid(g, times))
    window = max(len(times) // 10, 3)
    t_tail, g_tail = times[-window:], g[-window:]
    if np.any(g_tail <= 0.0):
        raise TailNotResolved("correction term is not positive over the tail window")
    slope, intercept = np.polyfit(t_tail, np.log(g_tail), 1)
    rate = -slope
    if rate <= 0.0:
        raise TailNotResolved(f"correction term is not decaying at the horizon (rate {rate:.3g})")
    tail = float(g_tail[-1] / rate)

    predicted = math.exp(intercept + slope * t_tail[-1])
    mismatch = abs(predicted - g_tail[-1]) / g_tail[-1]
    material = tail > TAIL_MATERIALITY * (body + tail)
    unsettled = traj.energy[-1] > 1e-8 * traj.energy[0]
    if material and (mismatch > TAIL_MISMATCH or unsettled):
        raise TailNotResolved(
            f"tail {tail:.3e} of {body + tail:.3e} not resolved "
            f"(fit mismatch {mismatch:.1%}, E_T/E_0 {traj.energy[-1] / traj.energy[0]:.2e})"
        )
    return body + tail
