"""
Constants often used for testing.

These cannot be used as fixtures because they are used as bounds for
fuzzing (outside of the test functions).
"""
import math

# Randers forms are drawn with |b| below this
MAX_FORM = 0.9

# eigenvalues of random Riemannian metrics
MIN_EIGEN = 0.25
MAX_EIGEN = 4.0

# lengths of random tangent vectors and covectors
MIN_LENGTH = 1e-2
MAX_LENGTH = 1e2

TORUS_PERIOD = 2.0 * math.pi
TORUS_RESOLUTION = 64
LINE_RESOLUTION = 1025
SPHERE_RESOLUTION = 256
