"""Interval least squares for the dynamics and its diagnostics.

Fits Theta over trajectory intervals, reports design-matrix conditioning,
exposes the directional one-dimensional least-squares probe, the noiseless
two-point bias demonstration, and the almost-axis-parallel quadratic
geometry check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditionViolated, DegenerateDirection, SingularDesign
from .lqr import Theta

SINGULAR_EIG_RATIO = 1e-12


@dataclass(frozen=True)
class Trajectory:
    """Columnar record of a simulated run.

    xs has length T+1 so that x_{t+1} is available for every step t < T.
    sigmas holds the applied exploration std per step; gain_ids identifies
    maximal constant-gain stretches.
    """

    xs: np.ndarray  # (T+1, n)
    us: np.ndarray  # (T, d)
    sigmas: np.ndarray  # (T,)
    gain_ids: np.ndarray  # (T,) integer

    def __post_init__(self):
        if self.xs.shape[0] != self.us.shape[0] + 1:
            raise ValueError("xs must have one more row than us")
        if not (len(self.sigmas) == len(self.us) == len(self.gain_ids)):
            raise ValueError("column lengths disagree")

    @property
    def length(self) -> int:
        return self.us.shape[0]

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    @property
    def d(self) -> int:
        return self.us.shape[1]

    def regressors(self, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        """(Z, Y) for steps in [start, stop): rows z_t = [x_t; u_t], y_t = x_{t+1}."""
        if not 0 <= start <= stop <= self.length:
            raise ValueError(f"bad interval [{start}, {stop}) for length {self.length}")
        z = np.hstack([self.xs[start:stop], self.us[start:stop]])
        y = self.xs[start + 1 : stop + 1]
        return z, y


@dataclass(frozen=True)
class OlsEstimate:
    """Least-squares estimate of the dynamics over an interval."""

    theta_hat: Theta
    interval: tuple[int, int]
    upsilon: np.ndarray  # sum of z_t z_t' over the interval
    cond: float
    eig_min: float
    eig_max: float


def design_matrix_stats(
    traj: Trajectory, start: int, stop: int
) -> tuple[np.ndarray, float, float, float]:
    """(Upsilon, cond, eig_min, eig_max) for the interval's design matrix.

    Singularity is allowed here; cond is reported as +inf.
    """
    z, _ = traj.regressors(start, stop)
    upsilon = z.T @ z
    eigs = np.linalg.eigvalsh(upsilon)
    eig_min, eig_max = float(eigs[0]), float(eigs[-1])
    if eig_min <= SINGULAR_EIG_RATIO * max(eig_max, 0.0):
        cond = np.inf
    else:
        cond = eig_max / eig_min
    return upsilon, cond, eig_min, eig_max


def ols_fit(traj: Trajectory, start: int, stop: int) -> OlsEstimate:
    """Fit Theta_hat = (sum x_{t+1} z_t') Upsilon^-1 over [start, stop).

    Raises SingularDesign when the design matrix is numerically singular
    (eig_min <= 1e-12 * eig_max); no regularization is applied.
    """
    z, y = traj.regressors(start, stop)
    upsilon = z.T @ z
    eigs = np.linalg.eigvalsh(upsilon)
    eig_min, eig_max = float(eigs[0]), float(eigs[-1])
    if eig_min <= SINGULAR_EIG_RATIO * max(eig_max, 1e-300):
        raise SingularDesign(
            f"eig_min={eig_min:.3g} vs eig_max={eig_max:.3g} on [{start}, {stop})"
        )
    cross = y.T @ z  # sum x_{t+1} z_t'
    cho = np.linalg.cholesky(upsilon)
    half = np.linalg.solve(cho, cross.T)
    theta_hat = np.linalg.solve(cho.T, half).T
    return OlsEstimate(
        theta_hat=Theta(theta_hat[:, : traj.n], theta_hat[:, traj.n :]),
        interval=(start, stop),
        upsilon=upsilon,
        cond=eig_max / eig_min,
        eig_min=eig_min,
        eig_max=eig_max,
    )


def normal_equation_residual(est: OlsEstimate, traj: Trajectory) -> float:
    """|| Theta_hat Upsilon - sum x_{t+1} z_t' ||_F, should be ~0 for any fit."""
    z, y = traj.regressors(*est.interval)
    return float(np.linalg.norm(est.theta_hat.stacked() @ est.upsilon - y.T @ z))


def directional_ols(
    traj: Trajectory,
    start: int,
    stop: int,
    row: int,
    anchor_row: np.ndarray,
    v: np.ndarray,
) -> float:
    """One-dimensional least squares along direction v from an anchor row.

    Minimizes sum_t (y_t - <anchor + lambda v, z_t>)^2 over lambda, where
    y_t is coordinate `row` of x_{t+1}.  Requires ||v|| = 1 and positive
    energy of the data along v.
    """
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("v must be a unit vector")
    z, y = traj.regressors(start, stop)
    zv = z @ v
    denom = float(zv @ zv)
    if denom <= 1e-14:
        raise DegenerateDirection(f"sum <v, z_t>^2 = {denom:.3g}")
    resid = y[:, row] - z @ np.asarray(anchor_row, dtype=float)
    return float(resid @ zv) / denom


def directional_foc_residual(
    traj: Trajectory,
    start: int,
    stop: int,
    row: int,
    anchor_row: np.ndarray,
    v: np.ndarray,
    lam: float,
) -> float:
    """First-order-condition residual of the 1-D problem at lambda."""
    z, y = traj.regressors(start, stop)
    zv = z @ v
    resid = y[:, row] - z @ (np.asarray(anchor_row, dtype=float) + lam * np.asarray(v))
    return float(resid @ zv)


def quadratic_geometry_check(
    h: np.ndarray, p_prime: np.ndarray, p_star: np.ndarray
) -> tuple[float, float, bool]:
    """Axis-restricted minimizers bound the distance to the true minimizer.

    For f(p) = (p - p*)' H (p - p*) with 2x2 SPD Hessian H = [[A^2, C],
    [C, B^2]], computes lambda_x = x' - argmin_x f(x, y') and lambda_y
    likewise, and returns (lambda_x^2 + lambda_y^2, 0.5 ||p' - p*||^2,
    holds).  Requires the near-diagonal condition |C| / min(A^2, B^2)
    <= 1/33; otherwise the claim is vacuous and ConditionViolated is raised.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (2, 2) or not np.allclose(h, h.T, atol=1e-12):
        raise ValueError("H must be symmetric 2x2")
    if np.min(np.linalg.eigvalsh(h)) <= 0:
        raise ValueError("H must be positive definite")
    a2, b2, c = h[0, 0], h[1, 1], h[0, 1]
    if abs(c) > min(a2, b2) / 33.0:
        raise ConditionViolated(
            f"|C|/min(A^2,B^2) = {abs(c) / min(a2, b2):.4g} > 1/33"
        )
    dx, dy = np.asarray(p_prime, dtype=float) - np.asarray(p_star, dtype=float)
    lam_x = dx + c * dy / a2
    lam_y = dy + c * dx / b2
    lhs = float(lam_x**2 + lam_y**2)
    rhs = 0.5 * float(dx**2 + dy**2)
    return lhs, rhs, lhs >= rhs - 1e-12


def bias_demo_2d(alpha: float, eps: float) -> float:
    """Noiseless two-point fit showing the drift-induced estimator offset.

    Data: theta_1 = [1, 1] observed through z_1 = [cos a, sin a], then
    theta_2 = [1 - eps, 1] through z_2 = [1, 0].  Returns ||theta_hat -
    theta_2||, which equals eps / tan(a).
    """
    if not 0 < alpha <= np.pi / 4:
        raise ValueError("alpha must lie in (0, pi/4]")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    theta_1 = np.array([1.0, 1.0])
    theta_2 = np.array([1.0 - eps, 1.0])
    z = np.array([[np.cos(alpha), np.sin(alpha)], [1.0, 0.0]])
    y = np.array([z[0] @ theta_1, z[1] @ theta_2])
    theta_hat = np.linalg.solve(z, y)
    return float(np.linalg.norm(theta_hat - theta_2))


def bias_demo_design_matrix(alpha: float) -> np.ndarray:
    """Design matrix of the two-point demo, used for conditioning checks."""
    z = np.array([[np.cos(alpha), np.sin(alpha)], [1.0, 0.0]])
    return z.T @ z
