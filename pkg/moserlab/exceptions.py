# ==================== CUSTOM EXCEPTIONS ====================
# Shared by every lab module; backend turns them into report entries
# and main maps them to exit codes.


class MoserLabError(Exception):
    """Base class for every laboratory error"""
    pass


class ConfigError(MoserLabError):
    """Raised when a problem config file cannot be read or validated"""
    pass


class ParameterError(MoserLabError, ValueError):
    """Raised when an exponent, weight or problem parameter leaves its admissible range"""
    pass


class DomainError(MoserLabError, ValueError):
    """Raised when an auxiliary function is evaluated at a singular point"""
    pass


class UnknownLabelError(MoserLabError, KeyError):
    """Raised when a claim label is not in the registry"""
    pass


class CertificationFailure(MoserLabError):
    """Raised when certified positivity could not be established"""
    pass


class InconclusiveCertification(CertificationFailure):
    """Raised when bisection hits max_depth without deciding (not a refutation)"""

    def __init__(self, message, depth, interval):
        super().__init__(message)
        self.depth = depth
        self.interval = interval


class CounterexampleFound(CertificationFailure):
    """Raised with an exact rational point where the polynomial fails the threshold"""

    def __init__(self, message, t_star, value):
        super().__init__(message)
        self.t_star = t_star
        self.value = value


class SandwichViolation(MoserLabError):
    """Raised when b|ξ|² ≤ ξᵀBξ ≤ b̄|ξ|² fails in some cell"""

    def __init__(self, message, cell):
        super().__init__(message)
        self.cell = cell


class InadmissibleTestFunctionError(MoserLabError, ValueError):
    """Raised when a test function does not vanish on A×(0,T) ∪ Ω×{0}"""
    pass


class SolverConvergenceError(MoserLabError):
    """Raised when conjugate gradients hits the iteration cap"""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(MoserLabError):
    """Raised when the implicit system has no positive mass or stiffness to anchor it"""
    pass


class HypothesisGapError(ParameterError):
    """Raised when α > r̄(2/3 − δ) holds but α ≥ 1 does not"""
    pass
