"""Exception types shared across the package."""


class NslqrError(Exception):
    """Base class for all package errors."""


class NonConvergent(NslqrError):
    """Riccati fixed-point iteration failed to converge or diverged."""


class Unstable(NslqrError):
    """Closed loop does not meet the required stability margin."""


class SingularDesign(NslqrError):
    """Design matrix is numerically singular (insufficient excitation)."""


class DegenerateDirection(NslqrError):
    """Direction has no energy in the data; 1-D least squares undefined."""


class ConditionViolated(NslqrError):
    """Off-diagonal dominance precondition of the geometry check fails."""


class InfeasibleBudget(NslqrError):
    """Requested variation budget cannot be met while staying stabilizable."""


class StabilizationFailed(NslqrError):
    """No (kappa, rho) certificate found for the gain sequence."""


class BadConfig(NslqrError):
    """Controller configuration violates its invariants."""


class Diverged(NslqrError):
    """Simulated state norm exceeded the divergence threshold."""
