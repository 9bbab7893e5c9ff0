"""
Numerical thresholds shared by the modules.

Functions expose these as keyword defaults; scenario files never
override them (tolerances for the audited inequalities live in the
scenario files instead).
"""
# a tangent vector shorter than this is treated as the zero vector
DEGENERACY_THRESHOLD = 1e-12

# relative step for y-derivatives of F^2 and F*^2
FD_STEP = 1e-4

# Randers forms must satisfy |b|_alpha <= 1 - RANDERS_MARGIN
RANDERS_MARGIN = 1e-6

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-12
NEWTON_TOL_FD = 1e-10  # custom norms: residual limited by FD roundoff
MAX_BACKTRACK = 30

ASCENT_STARTS = 8
ASCENT_MAX_ITER = 200
STATIONARITY_TOL = 1e-10
ANGLE_STEP = 1e-4

# default gradient mask, relative to the field amplitude
GRAD_THRESHOLD = 1e-8
# fraction of nodes where df != 0 on a degenerate reference before we refuse
DEGENERATE_FRACTION = 1e-3

SOLVER_RESIDUAL = 1e-10
SOLVER_MAX_ITER = 10_000

MIN_RESOLUTION = 16
MIN_SPHERE_RESOLUTION = 64
TAIL_TOLERANCE = 1e-12
COLLAR_WIDTH = 3
# identity checks skip nodes within this many cells of a masked node
STENCIL_REACH = 2
# and nodes where F(grad u) is below this fraction of its maximum
IDENTITY_FRACTION = 0.5

DENSITY_FLOOR = 1e-300
LOGSOBOLEV_FLOOR = 1e-12
DENSITY_MASS_TOL = 1e-8
NORMALIZATION_TOL = 1e-10
POSITIVITY_FLOOR = 1e-6
S_CURVATURE_ZERO = 1e-8

SPEED_DRIFT_TOL = 1e-6
MIN_RICCI_SAMPLES = 100

TAIL_MISMATCH = 0.1
TAIL_MATERIALITY = 1e-3
ERGODIC_SLACK = 1.05

# log(max double) ~ 709.78; e^{2ah} must stay finite
MAX_EXPONENT = 709.0

# x-step of the spray coefficients, and the outer steps of the Ricci trace
SPRAY_STEP = 1e-3
RICCI_STEP = 1e-2

GEODESIC_HALF_LENGTH = 0.1
GEODESIC_STEPS = 10

# slack when comparing a requested curvature bound with the sampled one
CERTIFY_SLACK = 1e-6
DUAL_TENSOR_TOL = 1e-5
