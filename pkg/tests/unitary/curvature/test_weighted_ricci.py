import math

import numpy as np
import pytest

from finsler_audit.calculus import OperatorContext
from finsler_audit.curvature import (
    distance_field,
    ric_bound_scan,
    ricci_samples,
    s_curvature_and_psi,
    weighted_ricci,
    weighted_ricci_value,
)
from finsler_audit.exceptions import UnsupportedChart
from finsler_audit.mesh import Chart, gaussian_measure, lebesgue_measure
from finsler_audit.norm import MinkowskiNormSpec
from tests.utils.reference import stereographic_metric


@pytest.mark.parametrize("x0", [-2.0, 0.0, 1.5])
def test_gaussian_line(gaussian_ctx, x0):
    report = weighted_ricci(
        gaussian_ctx.spec, gaussian_ctx.measure, [x0], [1.0], n_list=(math.inf, 3.0)
    )
    assert report.ricci == 0.0
    assert report.psi_prime == pytest.approx(x0, abs=1e-9)
    assert report.ric_inf == pytest.approx(1.0, abs=1e-8)
    assert report.ratio == pytest.approx(1.0, abs=1e-8)
    assert report.ric_n[3.0] == pytest.approx(1.0 - x0**2 / 2.0, abs=1e-8)
    row = report.as_row()
    assert row["x0"] == x0
    assert "ric_3" in row and "ric_inf" in row


def test_psi_on_the_reduced_sphere(sphere):
    _, spec, measure = sphere
    first, second = s_curvature_and_psi(spec, measure, [1.0], [1.0])
    assert first == pytest.approx(0.0, abs=1e-9)
    assert second == pytest.approx(0.0, abs=1e-7)


def test_scans(gaussian_ctx, sphere):
    _, spec, measure = sphere
    assert ric_bound_scan(gaussian_ctx.spec, gaussian_ctx.measure) == pytest.approx(1.0, abs=1e-7)
    assert ric_bound_scan(spec, measure) == pytest.approx(1.0, abs=1e-7)


def test_randers_gaussian_bound(randers):
    # min over F-unit v of K |v|² is K / max F(u)² = 1 / 2.25 for b = (0.5, 0)
    chart = Chart.periodic_box(16.0, (64, 64), origin=-8.0)
    bound = ric_bound_scan(randers, gaussian_measure(chart, 1.0))
    assert bound == pytest.approx(1.0 / 2.25, rel=1e-6)


def test_flat_ratios_vanish(randers, torus):
    reports = ricci_samples(randers, lebesgue_measure(torus), samples=100)
    assert len(reports) >= 100
    assert all(abs(r.ratio) < 1e-8 for r in reports)
    with pytest.raises(ValueError):
        ricci_samples(randers, lebesgue_measure(torus), samples=50)


def test_weighted_ricci_value():
    assert weighted_ricci_value(1.0, 2.0, 0.5, math.inf, 2) == 1.5
    assert weighted_ricci_value(1.0, 2.0, 0.5, 4.0, 2) == pytest.approx(-0.5)
    assert weighted_ricci_value(1.0, 2.0, 0.5, -2.0, 2) == pytest.approx(2.5)
    assert weighted_ricci_value(1.0, 2.0, 0.5, 2.0, 2) == -np.inf
    assert weighted_ricci_value(1.0, 0.0, 0.5, 2.0, 2) == 1.5
    with pytest.raises(ValueError):
        weighted_ricci_value(1.0, 0.0, 0.5, 1.0, 2)


def test_distance_on_the_line(gaussian_ctx, line):
    x = line.nodes[..., 0]
    h = line.spacing[0]
    field = distance_field(gaussian_ctx, 512)
    assert np.allclose(field.distance.values, np.abs(x), atol=1e-12)
    assert field.eikonal_residual < 1e-10
    assert not field.laplacian.mask[512]
    away = np.abs(x) >= 3.0 * h
    assert np.allclose(field.laplacian.values[away], -np.abs(x[away]), atol=1e-9)


def test_randers_distance_is_asymmetric(line):
    spec = MinkowskiNormSpec.randers([[1.0]], [0.5])
    ctx = OperatorContext(spec, gaussian_measure(line, 1.0))
    x = line.nodes[..., 0]
    field = distance_field(ctx, 512)
    assert np.allclose(field.distance.values, np.where(x >= 0.0, 1.5 * x, -0.5 * x), atol=1e-12)
    assert field.eikonal_residual < 1e-10


def test_distance_on_a_torus(randers_ctx, torus):
    field = distance_field(randers_ctx, (32, 32))
    assert field.distance.values[32, 32] == 0.0
    assert not field.laplacian.mask[32, 32]
    assert field.distance.values.min() == 0.0


def test_distance_needs_a_constant_norm(torus):
    spec = MinkowskiNormSpec.riemannian(stereographic_metric, dimension=2)
    with pytest.raises(UnsupportedChart):
        distance_field(OperatorContext(spec, lebesgue_measure(torus)), (0, 0))
