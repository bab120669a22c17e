"""Stationary LQR mathematics.

Riccati and Lyapunov solvers, optimal gains, steady-state costs, and a
finite-horizon dynamic-programming recursion used as a cross-validation
oracle.  All operations are pure functions of their (immutable) inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NonConvergent, Unstable

DEFAULT_TOL = 1e-10
DARE_MAX_ITER = 10_000
DARE_DIVERGE_NORM = 1e12


def spectral_radius(m: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def operator_norm(m: np.ndarray) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(m, ord=2))


def _as_matrix(x, rows=None, cols=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if rows is not None and a.shape != (rows, cols):
        raise ValueError(f"expected shape {(rows, cols)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


@dataclass(frozen=True)
class Theta:
    """Dynamics pair (A, B) for x' = A x + B u + w."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.a)
        if a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"A must be square, got {a.shape}")
        b = _as_matrix(self.b, a.shape[0], np.atleast_2d(np.asarray(self.b)).shape[1])
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.b.shape[1]

    def stacked(self) -> np.ndarray:
        """The n x (n+d) matrix [A B]."""
        return np.hstack([self.a, self.b])

    def key(self) -> bytes:
        """Hashable byte key, used for value caching."""
        return self.a.tobytes() + self.b.tobytes()


def theta_from_stacked(m: np.ndarray, n: int) -> Theta:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return Theta(m[:, :n], m[:, n:])


@dataclass(frozen=True)
class CostSpec:
    """Quadratic cost matrices plus isotropic process-noise level.

    The process noise covariance is W = psi2 * I_n.
    """

    q: np.ndarray
    r: np.ndarray
    psi2: float = 1.0

    def __post_init__(self):
        q = _as_matrix(self.q)
        r = _as_matrix(self.r)
        for name, m in (("Q", q), ("R", r)):
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric to 1e-12")
            if np.min(np.linalg.eigvalsh(m)) <= 0:
                raise ValueError(f"{name} must be positive definite")
        if self.psi2 < 0:
            raise ValueError("psi2 must be >= 0")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "psi2", float(self.psi2))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class Gain:
    """Linear feedback law u = K x."""

    k: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k", _as_matrix(self.k))


@dataclass(frozen=True)
class ValueMatrix:
    """Symmetric PSD quadratic value matrix."""

    p: np.ndarray

    def __post_init__(self):
        p = _as_matrix(self.p)
        if not np.allclose(p, p.T, atol=1e-10 * (1 + operator_norm(p))):
            raise ValueError("P must be symmetric")
        if np.min(np.linalg.eigvalsh(p)) < -1e-10 * (1 + operator_norm(p)):
            raise ValueError("P must be positive semi-definite")
        object.__setattr__(self, "p", 0.5 * (p + p.T))


def _dare_step(p, a, b, q, r):
    bpb = r + b.T @ p @ b
    apb = a.T @ p @ b
    return q + a.T @ p @ a - apb @ np.linalg.solve(bpb, apb.T)


def dare_residual(p: np.ndarray, theta: Theta, cost: CostSpec) -> float:
    """Operator norm of P - (Q + A'PA - A'PB (R+B'PB)^-1 B'PA)."""
    return operator_norm(p - _dare_step(p, theta.a, theta.b, cost.q, cost.r))


def solve_dare(
    theta: Theta,
    cost: CostSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DARE_MAX_ITER,
    p0: np.ndarray | None = None,
) -> ValueMatrix:
    """Solve the discrete algebraic Riccati fixed point by value iteration.

    Starts from P0 = Q (or a warm start) and iterates
    P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA until the residual drops below
    tol * (1 + ||P||_op).  Raises NonConvergent on the iteration cap or if
    ||P|| blows up, which signals an unstabilizable or near-marginal system.
    """
    a, b, q, r = theta.a, theta.b, cost.q, cost.r
    p = q.copy() if p0 is None else np.asarray(p0, dtype=float).copy()
    for _ in range(max_iter):
        p_next = _dare_step(p, a, b, q, r)
        # Frobenius norms inside the loop (an upper bound on the operator
        # norm, so the step criterion stays conservative); the accepted
        # iterate is still verified against the exact operator-norm residual.
        p_norm = float(np.sqrt(np.sum(p_next * p_next)))
        if p_norm > DARE_DIVERGE_NORM:
            raise NonConvergent(f"DARE iterate norm {p_norm:.3g} exceeds cap")
        diff = p_next - p
        if float(np.sqrt(np.sum(diff * diff))) <= 0.1 * tol * (1.0 + p_norm):
            p_next = 0.5 * (p_next + p_next.T)
            p_op = operator_norm(p_next)
            if dare_residual(p_next, theta, cost) <= tol * (1.0 + p_op):
                return ValueMatrix(p_next)
        p = p_next
    raise NonConvergent(f"DARE did not converge in {max_iter} iterations")


def gain_from_value(theta: Theta, cost: CostSpec, value: ValueMatrix) -> Gain:
    """K = -(R + B'PB)^-1 B'PA for a given value matrix."""
    p = value.p
    bpb = cost.r + theta.b.T @ p @ theta.b
    return Gain(-np.linalg.solve(bpb, theta.b.T @ p @ theta.a))


def optimal_gain(
    theta: Theta, cost: CostSpec, p0: np.ndarray | None = None
) -> Gain:
    """Certainty-equivalent optimal feedback gain for (theta, cost)."""
    return gain_from_value(theta, cost, solve_dare(theta, cost, p0=p0))


def closed_loop(theta: Theta, gain: Gain) -> np.ndarray:
    return theta.a + theta.b @ gain.k


def solve_lyapunov(theta: Theta, gain: Gain, cost: CostSpec) -> ValueMatrix:
    """Value matrix of a fixed stabilizing gain.

    Solves P = Q + K'RK + (A+BK)' P (A+BK).  Requires the closed loop to
    have spectral radius below 1 - 1e-8.
    """
    phi = closed_loop(theta, gain)
    rho = spectral_radius(phi)
    if rho >= 1.0 - 1e-8:
        raise Unstable(f"closed-loop spectral radius {rho:.6f} >= 1 - 1e-8")
    rhs = cost.q + gain.k.T @ cost.r @ gain.k
    p = scipy.linalg.solve_discrete_lyapunov(phi.T, rhs)
    p = 0.5 * (p + p.T)
    resid = operator_norm(p - rhs - phi.T @ p @ phi)
    if resid > DEFAULT_TOL * (1.0 + operator_norm(p)):
        raise NonConvergent(f"Lyapunov residual {resid:.3g} too large")
    return ValueMatrix(p)


def avg_cost(theta: Theta, gain: Gain, cost: CostSpec) -> float:
    """Steady-state average cost trace(P W) with W = psi2 * I."""
    p = solve_lyapunov(theta, gain, cost).p
    return cost.psi2 * float(np.trace(p))


def avg_cost_with_noise(
    theta: Theta, gain: Gain, sigma2: float, cost: CostSpec
) -> float:
    """Average cost of u = K x + sigma * eta with i.i.d. unit-covariance eta.

    The controller noise contributes additively:
    J(K, sigma) = J(K) + sigma^2 * trace(R + B' P(K) B).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    p = solve_lyapunov(theta, gain, cost).p
    base = cost.psi2 * float(np.trace(p))
    return base + sigma2 * float(np.trace(cost.r + theta.b.T @ p @ theta.b))


def finite_horizon_dp(
    theta: Theta, cost: CostSpec, horizon: int
) -> list[Gain]:
    """Backward dynamic-programming gains K_1..K_horizon with P_{T+1} = 0.

    Oracle only: for long horizons and stabilizable systems, the first-stage
    gain converges to the stationary optimal gain.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a, b, q, r = theta.a, theta.b, cost.q, cost.r
    p = np.zeros_like(q)
    gains: list[Gain] = []
    for _ in range(horizon):
        bpb = r + b.T @ p @ b
        k = -np.linalg.solve(bpb, b.T @ p @ a)
        gains.append(Gain(k))
        p = q + k.T @ r @ k + (a + b @ k).T @ p @ (a + b @ k)
        p = 0.5 * (p + p.T)
    gains.reverse()
    return gains
