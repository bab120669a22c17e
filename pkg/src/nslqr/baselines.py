"""Comparator controllers sharing the act/observe interface.

Fixed-window restart estimation (no adaptive tests), the clairvoyant
certainty-equivalence oracle, and a single fixed stabilizing gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynlqr import ControlDecision, Event
from .errors import BadConfig, NonConvergent, SingularDesign
from .estimation import Trajectory, ols_fit
from .instances import DynamicsSeq, fixed_gain_certificate
from .lqr import CostSpec, Gain, Theta, gain_from_value, optimal_gain, solve_dare


@dataclass(frozen=True)
class RestartConfig:
    """Window length, exploration schedule and the gain for window 1.

    sigma2 may be a constant or a function of the (1-based) window index.
    By default sigma^2 = 1 / sqrt(W), the stationary exploration tradeoff.
    """

    window: int
    warm_gain: Gain
    sigma2: float | Callable[[int], float] | None = None
    known_a: np.ndarray | None = None  # 1-D variant that only estimates b

    def sigma_for(self, window_index: int) -> float:
        if self.sigma2 is None:
            return self.window ** (-0.25)
        if callable(self.sigma2):
            return math.sqrt(self.sigma2(window_index))
        return math.sqrt(self.sigma2)


class RestartLqrController:
    """Refits the gain every W steps from the previous window only."""

    def __init__(self, config: RestartConfig, cost: CostSpec, horizon: int):
        if config.window < cost.n + cost.d + 2:
            raise BadConfig("window must be >= n+d+2")
        self.config = config
        self.cost = cost
        self.horizon = horizon
        self.n, self.d = cost.n, cost.d
        self._gain = config.warm_gain.k
        self.gain_id = 1
        self._win_xs: list[np.ndarray] = []
        self._win_us: list[np.ndarray] = []
        self.events: list[Event] = []

    def _window_index(self, t: int) -> int:
        return t // self.config.window + 1

    def act(self, t, x, rng) -> ControlDecision:
        sigma = self.config.sigma_for(self._window_index(t))
        u = self._gain @ x + sigma * rng.standard_normal(self.d)
        if not self._win_xs:
            self._win_xs.append(np.array(x, dtype=float))
        self._win_us.append(u)
        return ControlDecision(
            u, sigma, self.gain_id, self._window_index(t), 0, []
        )

    def observe(self, t, x_next) -> list[Event]:
        events: list[Event] = []
        self._win_xs.append(np.array(x_next, dtype=float))
        if (t + 1) % self.config.window == 0:
            new_gain = self._estimate_gain()
            if new_gain is None:
                events.append(Event(t, "GainFallback"))
            else:
                self._gain = new_gain
            self.gain_id += 1
            self._win_xs, self._win_us = [], []
        self.events.extend(events)
        return events

    def _estimate_gain(self) -> np.ndarray | None:
        xs = np.array(self._win_xs)
        us = np.array(self._win_us)
        if self.config.known_a is not None:
            # 1-D with known a: regress x_{t+1} - a x_t on u_t alone.
            a = float(np.asarray(self.config.known_a).reshape(()))
            resid = xs[1:, 0] - a * xs[:-1, 0]
            denom = float(us[:, 0] @ us[:, 0])
            if denom <= 1e-14:
                return None
            b_hat = float(resid @ us[:, 0]) / denom
            try:
                return optimal_gain(Theta([[a]], [[b_hat]]), self.cost).k
            except NonConvergent:
                return None
        traj = Trajectory(xs, us, np.zeros(len(us)), np.zeros(len(us), dtype=int))
        try:
            est = ols_fit(traj, 0, len(us))
            return optimal_gain(est.theta_hat, self.cost).k
        except (SingularDesign, NonConvergent):
            return None


class OracleCeController:
    """Plays the optimal gain of the instantaneous system, no exploration."""

    def __init__(self, instance: DynamicsSeq):
        self.instance = instance
        self._thetas = list(instance.thetas())  # theta_at is a linear scan
        self._gain_cache: dict[bytes, np.ndarray] = {}
        self._gain_ids: dict[bytes, int] = {}
        self._p_warm = None  # consecutive dynamics are close; reuse P
        self.events: list[Event] = []

    def _gain_at(self, t: int) -> tuple[np.ndarray, int]:
        theta = self._thetas[t]
        key = theta.key()
        if key not in self._gain_cache:
            val = solve_dare(theta, self.instance.cost, p0=self._p_warm)
            self._p_warm = val.p
            self._gain_cache[key] = gain_from_value(theta, self.instance.cost, val).k
            self._gain_ids[key] = len(self._gain_ids) + 1
        return self._gain_cache[key], self._gain_ids[key]

    def act(self, t, x, rng) -> ControlDecision:
        k, gid = self._gain_at(t)
        return ControlDecision(k @ x, 0.0, gid, 1, 0, [])

    def observe(self, t, x_next) -> list[Event]:
        return []


class FixedGainController:
    """A single linear law u = K x; rejected unless K certifies stable."""

    def __init__(self, gain: Gain, instance: DynamicsSeq):
        fixed_gain_certificate(instance, gain)
        self.k = gain.k
        self.events: list[Event] = []

    def act(self, t, x, rng) -> ControlDecision:
        return ControlDecision(self.k @ x, 0.0, 1, 1, 0, [])

    def observe(self, t, x_next) -> list[Event]:
        return []
