"""Finsler metric-measure calculus and an audit of the inequalities built on it."""

__version__ = "0.1.0"

from finsler_audit.audit import InequalityReport  # noqa: E402
from finsler_audit.calculus import OperatorContext  # noqa: E402
from finsler_audit.exceptions import ConfigError, FinslerAuditError  # noqa: E402
from finsler_audit.mesh import Chart, MeasureSpec, ScalarField, VectorField  # noqa: E402
from finsler_audit.norm import MinkowskiNormSpec, NormKind  # noqa: E402

__all__ = [
    "Chart",
    "ConfigError",
    "FinslerAuditError",
    "InequalityReport",
    "MeasureSpec",
    "MinkowskiNormSpec",
    "NormKind",
    "OperatorContext",
    "ScalarField",
    "VectorField",
    "__version__",
]
