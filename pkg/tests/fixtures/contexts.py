import pytest

from finsler_audit.calculus import OperatorContext
from finsler_audit.mesh import gaussian_measure, lebesgue_measure
from finsler_audit.norm import MinkowskiNormSpec


@pytest.fixture(scope="module")
def flat_ctx(torus, euclidean):
    return OperatorContext(euclidean, lebesgue_measure(torus, normalize=True))


@pytest.fixture(scope="module")
def randers_ctx(torus, randers):
    return OperatorContext(randers, lebesgue_measure(torus, normalize=True))


@pytest.fixture(scope="module")
def gaussian_ctx(line):
    return OperatorContext(MinkowskiNormSpec.euclidean(1), gaussian_measure(line, 1.0))


@pytest.fixture(scope="module")
def sphere_ctx(sphere):
    _, spec, measure = sphere
    return OperatorContext(spec, measure)
