class FinslerAuditError(Exception):
    """Base class for every error raised by finsler_audit."""


class DegenerateDirection(FinslerAuditError, ValueError):
    pass


class NotConvex(FinslerAuditError, ValueError):
    pass


class ConvergenceFailure(FinslerAuditError, ArithmeticError):
    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


class DegenerateReference(FinslerAuditError, ValueError):
    pass


class IntegrationBlowup(FinslerAuditError, ArithmeticError):
    pass


class UnsupportedChart(FinslerAuditError, NotImplementedError):
    pass


class SolverStall(FinslerAuditError, ArithmeticError):
    pass


class TailNotResolved(FinslerAuditError, ArithmeticError):
    pass


class NotNormalized(FinslerAuditError, ValueError):
    pass


class NotDensity(FinslerAuditError, ValueError):
    pass


class HypothesisUnverified(FinslerAuditError, ValueError):
    pass


class OverflowRange(FinslerAuditError, OverflowError):
    pass


class NotPositive(FinslerAuditError, ValueError):
    pass


class InvalidParameter(FinslerAuditError, ValueError):
    """A checker or scenario argument outside its admissible range."""


class ConfigError(FinslerAuditError, ValueError):
    def __init__(self, message, path=None, line=None, key=None):
        self.path = path
        self.line = line
        self.key = key
        self.message = message
        super().__init__(self._format())

    def _format(self):
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(str(self.line))
        prefix = ":".join(where)
        if self.key is not None:
            prefix = f"{prefix}: key '{self.key}'" if prefix else f"key '{self.key}'"
        return f"{prefix}: {self.message}" if prefix else self.message
