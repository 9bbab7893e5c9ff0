import math

import numpy as np
import pytest

from finsler_audit.audit import (
    check_energy_laplacian_bound,
    check_entropy_condition,
    check_logsobolev,
    check_poincare,
    check_ricci_certificate,
    check_spectral_gap,
    check_volume_bound,
)
from finsler_audit.calculus import OperatorContext
from finsler_audit.exceptions import NotPositive
from finsler_audit.heatflow import solve_heat
from finsler_audit.mesh import Chart, gaussian_measure
from finsler_audit.norm import MinkowskiNormSpec
from tests.utils.reference import gaussian_volume_excess


@pytest.fixture(scope="module")
def unnormalized_ctx(line):
    return OperatorContext(MinkowskiNormSpec.euclidean(1), gaussian_measure(line, 1.0, normalize=False))


def test_gaussian_poincare_is_sharp(gaussian_ctx, linear):
    report = check_poincare(gaussian_ctx, linear, 1.0, tol=1e-6, certified_k=1.0)
    assert report.claim == "poincare"
    assert report.lhs == pytest.approx(1.0, rel=1e-10)
    assert report.passed


def test_poincare_needs_positive_k(gaussian_ctx, linear):
    with pytest.raises(ValueError):
        check_poincare(gaussian_ctx, linear, 0.0, tol=1e-6, certified_k=1.0)


def test_corrected_poincare_on_the_sphere(sphere_ctx, cos_theta):
    flow = solve_heat(sphere_ctx, cos_theta, horizon=5.0, dt=1e-2, store_fields=False)
    report = check_poincare(
        sphere_ctx, cos_theta, 1.0, tol=1e-6, with_correction=True, certified_k=1.0, trajectory=flow
    )
    assert report.claim == "poincare-corrected"
    assert report.passed
    assert report.details["dominates_plain"]
    # Var = 1/3, plain side 2/3, correction 1/12
    assert report.lhs == pytest.approx(1.0 / 3.0, rel=1e-3)
    assert report.details["plain_rhs"] == pytest.approx(2.0 / 3.0, rel=1e-3)
    assert report.details["correction"] == pytest.approx(1.0 / 12.0, rel=2e-2)
    assert report.rhs == pytest.approx(0.5, rel=1e-2)


@pytest.mark.parametrize("tilt", [0.25, 0.5, 1.0])
def test_gaussian_logsobolev_is_sharp_on_tilts(gaussian_ctx, linear, tilt):
    density = np.exp(tilt * linear - tilt**2 / 2.0)
    report = check_logsobolev(gaussian_ctx, density, 1.0, tol=1e-3, certified_k=1.0)
    assert report.passed
    assert report.lhs == pytest.approx(tilt**2 / 2.0, rel=1e-8)
    assert report.rhs == pytest.approx(tilt**2 / 2.0, rel=1e-3)


def test_energy_laplacian_bound(gaussian_ctx, linear, sphere_ctx, cos_theta):
    assert check_energy_laplacian_bound(gaussian_ctx, linear, 1.0, tol=1e-6, certified_k=1.0).passed
    report = check_energy_laplacian_bound(sphere_ctx, cos_theta, 1.0, tol=1e-6, certified_k=1.0)
    assert report.passed
    assert report.details["laplacian_sq"] == pytest.approx(4.0 / 3.0, rel=1e-2)


def test_entropy_condition(gaussian_ctx, linear):
    density = np.exp(0.5 * linear - 0.125)
    report = check_entropy_condition(gaussian_ctx, density, 1.0, tol=1e-6)
    assert report.passed
    assert report.lhs == pytest.approx(report.rhs, rel=1e-6)
    assert not check_entropy_condition(gaussian_ctx, density, 0.5, tol=1e-6).passed
    with pytest.raises(NotPositive):
        check_entropy_condition(gaussian_ctx, linear, 1.0, tol=1e-6)


def test_spectral_gap_and_certificate(gaussian_ctx):
    assert check_spectral_gap(gaussian_ctx, 1.0, tol=1e-3).passed
    assert not check_spectral_gap(gaussian_ctx, 1.1, tol=1e-3).passed
    report = check_ricci_certificate(gaussian_ctx, 1.0, tol=1e-6)
    assert report.passed
    assert report.details["monotone_in_n"]
    assert report.details["samples"] >= 100


@pytest.mark.parametrize("radius", [2.0, 3.0])
def test_volume_bound_excess(unnormalized_ctx, radius):
    report = check_volume_bound(
        unnormalized_ctx, 512, radius, 1.0, r_min=[0.05, 0.1], tol=0.0, certified_k=1.0
    )
    assert report.claim == f"volume-bound[R={radius:g}]"
    assert report.informational
    assert report.details["excess"] == pytest.approx(gaussian_volume_excess(radius), abs=1e-3)
    assert report.details["expected_slope"] == 0.0
    assert set(report.details["rhs_by_r_min"]) == {"0.05", "0.1"}


def test_distributional_volume_bound(unnormalized_ctx):
    report = check_volume_bound(
        unnormalized_ctx, 512, 2.0, 1.0, r_min=[0.05], tol=0.0, distributional=True, certified_k=1.0
    )
    assert math.isinf(report.rhs)
    assert report.divergent
    assert report.informational
    assert math.isfinite(report.details["classical_rhs"])


def test_volume_bound_exclusion_radius(unnormalized_ctx):
    with pytest.raises(ValueError):
        check_volume_bound(unnormalized_ctx, 512, 2.0, 1.0, r_min=[0.01], tol=0.0, certified_k=1.0)


@pytest.fixture(scope="module")
def fine_line_ctx():
    # h = 1/4096, so every radius below is a node
    line = Chart.truncated_line(65537, half_width=8.0)
    return OperatorContext(MinkowskiNormSpec.euclidean(1), gaussian_measure(line, 1.0, normalize=False))


@pytest.mark.parametrize("radius", [2.0, 3.0, 4.0])
def test_volume_bound_excess_on_a_fine_line(fine_line_ctx, radius):
    report = check_volume_bound(
        fine_line_ctx, 32768, radius, 1.0, r_min=[1e-3, 2e-3], tol=0.0, certified_k=1.0
    )
    assert report.details["excess"] == pytest.approx(gaussian_volume_excess(radius), rel=1e-4)


def test_planar_volume_bound_diverges_logarithmically():
    chart = Chart.periodic_box(2.0, (512, 512), origin=-1.0)
    ctx = OperatorContext(MinkowskiNormSpec.euclidean(2), gaussian_measure(chart, 1.0, normalize=False))
    report = check_volume_bound(
        ctx, (256, 256), 0.9, 1.0, r_min=[0.05, 0.1, 0.2], tol=0.0, certified_k=1.0
    )
    rhs = [report.details["rhs_by_r_min"][key] for key in ("0.05", "0.1", "0.2")]
    assert rhs[0] > rhs[1] > rhs[2]
    assert math.isfinite(report.lhs)
    assert report.details["expected_slope"] == pytest.approx(2.0 * math.pi)
    assert report.details["slope"] == pytest.approx(report.details["expected_slope"], rel=0.1)
