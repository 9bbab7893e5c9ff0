import numpy as np
import pytest

from finsler_audit.norm import MinkowskiNormSpec


@pytest.fixture(scope="module")
def euclidean():
    return MinkowskiNormSpec.euclidean(2)


@pytest.fixture(scope="module")
def randers():
    # F(y) = |y| + 0.5 y_1
    return MinkowskiNormSpec.randers(np.eye(2), [0.5, 0.0])


@pytest.fixture(scope="module")
def custom_randers():
    """The same Randers norm, seen only through its values."""

    def fn(x, y):
        return np.linalg.norm(y, axis=-1) + 0.5 * y[..., 0]

    return MinkowskiNormSpec.custom(fn, 2, x_independent=True)


@pytest.fixture(scope="module")
def quartic():
    """A non-quadratic, reversible custom norm: (|y|⁴ + y_1⁴)^{1/4}."""

    def fn(x, y):
        return (np.sum(y**2, axis=-1) ** 2 + y[..., 0] ** 4) ** 0.25

    return MinkowskiNormSpec.custom(fn, 2, x_independent=True, name="quartic")
