"""
Hypothesis strategies for norms, base points and directions.
"""
import numpy as np
from hypothesis import note
from hypothesis.strategies import composite, floats, sampled_from

from finsler_audit.norm import MinkowskiNormSpec
from tests.utils.constants import (
    MAX_EIGEN,
    MAX_FORM,
    MAX_LENGTH,
    MIN_EIGEN,
    MIN_LENGTH,
)

angle = floats(min_value=0.0, max_value=2.0 * np.pi, allow_nan=False)
length = floats(min_value=MIN_LENGTH, max_value=MAX_LENGTH, allow_nan=False)
coordinate = floats(min_value=-3.0, max_value=3.0, allow_nan=False)


@composite
def vector(draw):
    theta = draw(angle)
    return draw(length) * np.array([np.cos(theta), np.sin(theta)])


@composite
def point(draw):
    return np.array([draw(coordinate), draw(coordinate)])


@composite
def spd_matrix(draw):
    """A 2x2 symmetric positive definite matrix with bounded spectrum."""
    theta = draw(angle)
    rotation = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    eigen = [draw(floats(min_value=MIN_EIGEN, max_value=MAX_EIGEN)) for _ in range(2)]
    return rotation @ np.diag(eigen) @ rotation.T


@composite
def randers_norm(draw):
    """Constant Randers norm with |b|_a <= MAX_FORM."""
    a = draw(spd_matrix())
    theta = draw(angle)
    size = draw(floats(min_value=0.0, max_value=MAX_FORM))
    # scale the direction so that its a-dual length is `size`
    direction = np.array([np.cos(theta), np.sin(theta)])
    dual_length = np.sqrt(direction @ np.linalg.inv(a) @ direction)
    b = size * direction / dual_length
    note(f"a = {a.tolist()}, b = {b.tolist()}")
    return MinkowskiNormSpec.randers(a, b)


@composite
def riemannian_norm(draw):
    a = draw(spd_matrix())
    note(f"a = {a.tolist()}")
    return MinkowskiNormSpec.riemannian(a)


@composite
def closed_form_norm(draw):
    kind = draw(sampled_from(["riemannian", "randers"]))
    if kind == "riemannian":
        return draw(riemannian_norm())
    return draw(randers_norm())
