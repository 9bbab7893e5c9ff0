import numpy as np
import pytest

from finsler_audit.exceptions import NotDensity, NotNormalized
from finsler_audit.heatflow import energy, entropy, sobolev_norm, spectral_gap, variance
from finsler_audit.mesh import gaussian_measure
from tests.utils.reference import gaussian_entropy_of_tilt


def test_flat_energy(flat_ctx, sine):
    assert energy(flat_ctx, sine) == pytest.approx(0.5, rel=1e-4)
    assert sobolev_norm(flat_ctx, sine) == pytest.approx(2.0, rel=1e-4)


def test_gaussian_variance(gaussian_ctx, linear, line):
    assert variance(gaussian_ctx.measure, linear) == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(NotNormalized):
        variance(gaussian_measure(line, 1.0, normalize=False), linear)


@pytest.mark.parametrize("tilt", [0.25, 0.5, 1.0])
def test_entropy_of_a_tilt(gaussian_ctx, linear, tilt):
    density = np.exp(tilt * linear - tilt**2 / 2.0)
    expected = gaussian_entropy_of_tilt(tilt)
    assert entropy(gaussian_ctx.measure, density) == pytest.approx(expected, rel=1e-9)


def test_entropy_needs_a_density(gaussian_ctx, linear):
    with pytest.raises(NotDensity):
        entropy(gaussian_ctx.measure, linear)
    with pytest.raises(NotDensity):
        entropy(gaussian_ctx.measure, 2.0 * np.ones_like(linear))
    # the constant density has no entropy
    assert entropy(gaussian_ctx.measure, np.ones_like(linear)) == pytest.approx(0.0, abs=1e-14)


def test_spectral_gaps(flat_ctx, gaussian_ctx, sphere_ctx):
    h = flat_ctx.chart.spacing[0]
    assert spectral_gap(flat_ctx) == pytest.approx(4.0 * np.sin(h / 2.0) ** 2 / h**2, rel=1e-8)
    assert spectral_gap(gaussian_ctx) == pytest.approx(1.0, rel=1e-3)
    assert spectral_gap(sphere_ctx) == pytest.approx(2.0, rel=1e-3)
