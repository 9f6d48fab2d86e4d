"""
exception hierarchy shared by every module
numerical failures are errors, negative verdicts are report entries
"""


class KProbeError(Exception):
    """base class for all toolkit errors"""


class ConfigError(KProbeError, ValueError):
    """malformed run config or model description"""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ModelSpecError(ConfigError):
    """model description that cannot be assembled into a SystemModel"""


class DomainError(KProbeError, ValueError):
    """point outside the corner domain or outside a factor's admissible range"""


class LevelSetError(DomainError):
    """level set degenerates to isolated points"""


class QuadratureError(KProbeError, RuntimeError):
    """quadrature failed to converge"""

    def __init__(self, message, estimates=()):
        super().__init__(message)
        self.estimates = tuple(estimates)


class StepError(KProbeError, RuntimeError):
    """difference stencil could not be kept inside the domain"""


class SingularJacobianError(KProbeError, ArithmeticError):
    """action jacobian is not invertible at the requested point"""


class FitError(KProbeError, RuntimeError):
    """singular action regression failed"""


class ReportError(KProbeError, RuntimeError):
    """report could not be written"""
