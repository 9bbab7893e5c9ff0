import math

import numpy as np
import pytest

from finsler_audit.audit import (
    check_chain_rule,
    check_duality,
    check_gradient_identity,
    check_heat_diagnostics,
    check_linearized_symmetry,
    check_product_rule,
    check_weak_laplacian,
)
from finsler_audit.calculus import OperatorContext
from finsler_audit.mesh import Chart, lebesgue_measure
from finsler_audit.norm import MinkowskiNormSpec
from finsler_audit.scenarios import FunctionRef


def test_duality(randers_ctx):
    report = check_duality(randers_ctx, tol=1e-8)
    assert report.passed
    assert report.details["samples"] == 1000
    assert report.details["tensor_residual"] < 1e-5
    # the same seed draws the same directions
    assert check_duality(randers_ctx, tol=1e-8).lhs == report.lhs


@pytest.mark.parametrize("context", ["flat_ctx", "randers_ctx"])
def test_gradient_identity(context, sine, request):
    report = check_gradient_identity(request.getfixturevalue(context), sine, tol=1e-6)
    assert report.passed
    assert report.details["gradient_residual"] < 1e-6
    assert report.details["pairing_residual"] < 1e-9


def test_gradient_identity_of_a_constant(randers_ctx, torus):
    report = check_gradient_identity(randers_ctx, np.ones(torus.shape), tol=1e-6)
    assert report.details == {"empty": True}
    assert report.passed


def test_linearized_symmetry(randers_ctx, sine, smooth, bump):
    assert check_linearized_symmetry(randers_ctx, sine, smooth, bump, tol=1e-10).passed


def test_linearized_symmetry_with_critical_nodes():
    # sin x has its critical points on the nodes π/2 and 3π/2 of a 64 node circle
    circle = Chart.periodic_box(2.0 * math.pi, 64)
    ctx = OperatorContext(MinkowskiNormSpec.euclidean(1), lebesgue_measure(circle, normalize=True))
    u = np.sin(circle.nodes[..., 0])
    f1 = FunctionRef("bump").values(circle)
    f2 = FunctionRef("random-smooth").values(circle, seed=1)
    report = check_linearized_symmetry(ctx, u, f1, f2, tol=1e-10)
    assert report.passed


@pytest.mark.parametrize("context", ["flat_ctx", "randers_ctx"])
def test_product_and_chain_rules(context, sine, smooth, request):
    ctx = request.getfixturevalue(context)
    product = check_product_rule(ctx, sine, smooth, tol=1e-2)
    chain = check_chain_rule(ctx, sine, smooth, tol=1e-2)
    assert product.passed
    assert chain.passed
    assert 0 < chain.details["region_nodes"] < ctx.chart.node_count


@pytest.fixture(scope="module")
def refinement():
    """Chain rule residuals for the flat and Randers norms at 128 and 256 nodes a side."""
    norms = {
        "flat": MinkowskiNormSpec.euclidean(2),
        "randers": MinkowskiNormSpec.randers(np.eye(2), [0.5, 0.0]),
    }
    residuals = {}
    for name, spec in norms.items():
        for n in (128, 256):
            torus = Chart.periodic_box(2.0 * math.pi, (n, n))
            ctx = OperatorContext(spec, lebesgue_measure(torus, normalize=True))
            u = FunctionRef("sine").values(torus)
            f = FunctionRef("random-smooth").values(torus, seed=11)
            residuals[name, n] = -check_chain_rule(ctx, u, f, tol=0.0).margin
    return residuals


@pytest.mark.parametrize("name", ["flat", "randers"])
def test_chain_rule_converges(refinement, name):
    coarse, fine = refinement[name, 128], refinement[name, 256]
    assert fine < 1e-4
    # at least second order
    assert coarse / fine > 3.5


def test_weak_laplacian(randers_ctx, sine, bump):
    report = check_weak_laplacian(randers_ctx, sine, bump, tol=1e-10)
    assert report.passed
    assert report.lhs == pytest.approx(report.rhs, abs=1e-12)


def test_heat_diagnostics(circle):
    ctx = OperatorContext(MinkowskiNormSpec.euclidean(1), lebesgue_measure(circle, normalize=True))
    u0 = np.sin(circle.nodes[..., 0])
    report = check_heat_diagnostics(ctx, tol=1e-12, u0=u0, horizon=1.0, dt=0.05)
    assert report.passed
    assert report.tolerance == pytest.approx(0.25)
    assert report.details["energy_increase"] == 0.0
    assert report.details["decay_rate"] > 0.9
