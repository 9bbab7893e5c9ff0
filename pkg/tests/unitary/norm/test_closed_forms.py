import numpy as np
import pytest

from finsler_audit.exceptions import DegenerateDirection, NotConvex
from finsler_audit.norm import (
    MinkowskiNormSpec,
    check_dual_tensor,
    dual_norm,
    evaluate,
    fundamental_tensor,
    legendre,
    legendre_inv,
    reversibility,
    validate,
)

ORIGIN = np.zeros(2)


def test_randers_values(randers):
    assert evaluate(randers, ORIGIN, [1.0, 0.0]) == pytest.approx(1.5)
    assert evaluate(randers, ORIGIN, [-1.0, 0.0]) == pytest.approx(0.5)
    assert evaluate(randers, ORIGIN, [0.0, 2.0]) == pytest.approx(2.0)


def test_randers_fundamental_tensor(randers):
    g = fundamental_tensor(randers, ORIGIN, [1.0, 0.0])
    assert np.allclose(g, [[2.25, 0.0], [0.0, 1.5]], atol=1e-14)


def test_randers_dual_and_inverse(randers):
    assert dual_norm(randers, ORIGIN, [1.0, 0.0]) == pytest.approx(2.0 / 3.0, rel=1e-14)
    assert np.allclose(legendre_inv(randers, ORIGIN, [1.0, 0.0]), [4.0 / 9.0, 0.0], atol=1e-12)


def test_riemannian_legendre_is_lowering():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    spec = MinkowskiNormSpec.riemannian(a)
    y = np.array([0.3, -1.2])
    assert np.allclose(legendre(spec, ORIGIN, y), a @ y)
    assert np.allclose(legendre_inv(spec, ORIGIN, a @ y), y)
    assert dual_norm(spec, ORIGIN, a @ y) == pytest.approx(evaluate(spec, ORIGIN, y))


def test_batched_shapes(randers):
    x = np.zeros((5, 7, 2))
    y = np.random.default_rng(0).normal(size=(5, 7, 2))
    assert evaluate(randers, x, y).shape == (5, 7)
    assert fundamental_tensor(randers, x, y).shape == (5, 7, 2, 2)
    assert legendre_inv(randers, x, legendre(randers, x, y)).shape == (5, 7, 2)


def test_degenerate_direction(randers):
    with pytest.raises(DegenerateDirection):
        fundamental_tensor(randers, ORIGIN, [0.0, 0.0])
    # the Legendre map sends the zero vector to the zero covector
    assert np.all(legendre(randers, ORIGIN, [0.0, 0.0]) == 0.0)
    assert np.all(legendre_inv(randers, ORIGIN, [0.0, 0.0]) == 0.0)


def test_reversibility(randers, euclidean):
    assert reversibility(randers, ORIGIN) == pytest.approx(3.0)
    assert reversibility(euclidean, ORIGIN) == 1.0


def test_reversed_metric(randers):
    reverse = randers.reversed()
    y = np.array([0.4, -0.9])
    assert evaluate(reverse, ORIGIN, y) == pytest.approx(evaluate(randers, ORIGIN, -y))


def test_validate_rejects_long_form():
    with pytest.raises(NotConvex):
        validate(MinkowskiNormSpec.randers(np.eye(2), [1.0, 0.0]), ORIGIN)


def test_validate_rejects_indefinite_metric():
    with pytest.raises(NotConvex):
        validate(MinkowskiNormSpec.riemannian(np.diag([1.0, -1.0])), ORIGIN)


def test_validate_accepts(randers, quartic):
    validate(randers, np.zeros((3, 2)))
    validate(quartic, np.zeros((3, 2)))


def test_dual_tensor_is_inverse(randers):
    y = np.array([[1.0, 0.0], [0.3, 0.8], [-0.6, 0.2]])
    assert check_dual_tensor(randers, np.zeros_like(y), y) < 1e-5


def test_dimension_is_checked():
    with pytest.raises(ValueError):
        MinkowskiNormSpec.riemannian(np.eye(3))
