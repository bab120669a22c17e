"""Adaptive-restart controller with multi-scale exploration phases.

Epochs restart the estimation from scratch; blocks within an epoch double
in length and refresh the certainty-equivalent gain; randomized exploration
phases inject extra noise at multiple scales so that parameter changes of
different magnitudes are detectable.  Two statistical tests (end of phase,
end of block) compare interval estimates and trigger restarts; a norm
threshold on the state triggers a stabilization epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, NonConvergent, SingularDesign
from .estimation import OlsEstimate, Trajectory, ols_fit
from .instances import GainSeq
from .lqr import CostSpec, Theta, optimal_gain

MAX_BLOCK_INDEX = 30


@dataclass(frozen=True)
class DynLqrConfig:
    """Tuning knobs of the adaptive controller.

    block_len is the warm-up/base block length L; c0 scales the exploration
    energy (nu_j^2 = sqrt(c0 / (2^j L))); c_test multiplies the restart-test
    thresholds; x_upper/x_lower are the stabilization enter/exit norms.
    """

    block_len: int
    c0: float
    c_test: float
    nu0: float = 1.0
    x_upper: float = math.inf
    x_lower: float = 1.0
    max_block_index: int = MAX_BLOCK_INDEX

    def __post_init__(self):
        if self.c0 <= 0 or self.c_test <= 0 or self.nu0 <= 0:
            raise BadConfig("c0, c_test and nu0 must be positive")
        if not 0 < self.x_lower < self.x_upper:
            raise BadConfig("need 0 < x_lower < x_upper")
        if self.block_len < 2:
            raise BadConfig("block_len must be >= 2")

    def nu(self, j: int) -> float:
        """Exploration std at scale j (nu0 for j = 0)."""
        if j == 0:
            return self.nu0
        j = min(j, self.max_block_index)
        return (self.c0 / (2**j * self.block_len)) ** 0.25


# Practical x_upper/x_lower formulas; the leading constants follow the
# geometric-contraction bound with C_ss = 1.
def default_config(
    n: int,
    d: int,
    horizon: int,
    c_test: float,
    psi: float = 1.0,
    kappa: float = 2.0,
    rho0: float = 0.9,
    beta: float = 1.0,
    nu0: float = 1.0,
) -> DynLqrConfig:
    block_len = max(4 * (n + d), 32)
    c0 = 4.0 * math.log(horizon)
    log_t = math.log(max(horizon, 3))
    x_upper = (
        2.0
        * kappa
        * math.e
        * (
            math.sqrt(8.0 * (n + d)) * beta / math.sqrt(1.0 - rho0) * math.sqrt(log_t)
            + (n + d) * beta / (1.0 - rho0)
        )
    )
    x_lower = 2.0 * psi * kappa * math.sqrt(n) / (1.0 - rho0)
    return DynLqrConfig(
        block_len=block_len,
        c0=c0,
        c_test=c_test,
        nu0=nu0,
        x_upper=x_upper,
        x_lower=x_lower,
    )


@dataclass(frozen=True)
class ExplorationPhase:
    scale: int
    start: int  # absolute step the phase began
    end: int  # absolute last step; length 2^scale * L


@dataclass
class Event:
    t: int
    kind: str
    detail: str = ""

    def __str__(self):
        return f"{self.kind}({self.detail})" if self.detail else self.kind


@dataclass
class ControlDecision:
    u: np.ndarray
    sigma: float
    gain_id: int
    epoch: int
    block: int  # 0 = warm-up, -1 = stabilizing, j >= 1 otherwise
    events: list[Event] = field(default_factory=list)


WARMUP, BLOCK, STABILIZING = "warmup", "block", "stabilizing"


class DynLqrController:
    """Single-threaded mutable state machine; one instance per run."""

    def __init__(
        self,
        config: DynLqrConfig,
        stab_gains: GainSeq,
        cost: CostSpec,
        horizon: int,
    ):
        n, d = cost.n, cost.d
        if config.block_len < n + d + 2:
            raise BadConfig(f"block_len must be >= n+d+2 = {n + d + 2}")
        if stab_gains.horizon < horizon:
            raise BadConfig("stabilizing gain sequence shorter than horizon")
        self.config = config
        self.stab_gains = stab_gains
        self.cost = cost
        self.horizon = horizon
        self.n, self.d = n, d
        self.epoch = 1
        self.epoch_start = 0
        self.mode = WARMUP
        self.block = 0
        self.gain_id = 0
        self._gain: np.ndarray | None = None  # CE gain while in block mode
        self._last_stab_gain = None
        self.prev_estimate: OlsEstimate | None = None
        self._pending_block_fit: OlsEstimate | None = None
        self.phases: list[ExplorationPhase] = []
        self._xs: list[np.ndarray] = []
        self._us: list[np.ndarray] = []
        self._sigmas: list[float] = []
        self.events: list[Event] = []
        # Normalized test statistics (value compared against c_test^2),
        # recorded for offline threshold calibration.
        self.test_stats: list[tuple[int, str, float]] = []

    # -- scheduling helpers -------------------------------------------------

    def _block_end(self, j: int) -> int:
        return self.epoch_start + 2**j * self.config.block_len - 1

    def _block_start(self, j: int) -> int:
        return self.epoch_start + 2 ** (j - 1) * self.config.block_len

    def _phase_start_prob(self, j: int) -> float:
        weights = sum(2.0 ** (-m / 2.0) for m in range(j))
        return 2.0 ** (-j / 2.0) * weights / self.config.block_len

    def _sample_scale(self, j: int, rng: np.random.Generator) -> int:
        weights = np.array([2.0 ** (-m / 2.0) for m in range(j)])
        return int(rng.choice(j, p=weights / weights.sum()))

    # -- the controller contract -------------------------------------------

    def act(self, t: int, x: np.ndarray, rng: np.random.Generator) -> ControlDecision:
        events: list[Event] = []
        cfg = self.config
        if self.mode == STABILIZING:
            u = self.stab_gains.gain_at(t).k @ x
            return ControlDecision(u, 0.0, self.gain_id, self.epoch, -1, events)

        if self.mode == WARMUP:
            g = self.stab_gains.gain_at(t)
            if g is not self._last_stab_gain:
                self.gain_id += 1
                self._last_stab_gain = g
            k = g.k
            sigma = cfg.nu0
        else:
            j = self.block
            if rng.random() < self._phase_start_prob(j):
                m = self._sample_scale(j, rng)
                end = t + 2**m * cfg.block_len - 1
                self.phases.append(ExplorationPhase(m, t, end))
                ev = Event(t, "PhaseStart", f"m={m}")
                events.append(ev)
                self.events.append(ev)
            if self.phases:
                sigma = cfg.nu(min(p.scale for p in self.phases))
            else:
                sigma = cfg.nu(j)
            k = self._gain

        u = k @ x + sigma * rng.standard_normal(self.d)
        if not self._xs:
            self._xs.append(np.array(x, dtype=float))
        self._us.append(u)
        self._sigmas.append(sigma)
        block_code = 0 if self.mode == WARMUP else self.block
        return ControlDecision(u, sigma, self.gain_id, self.epoch, block_code, events)

    def observe(self, t: int, x_next: np.ndarray) -> list[Event]:
        events: list[Event] = []
        cfg = self.config
        if self.mode == STABILIZING:
            if float(np.linalg.norm(x_next)) <= cfg.x_lower:
                events.append(Event(t, "StabilizationExit"))
                self._start_epoch(t + 1)
            self.events.extend(events)
            return events

        self._xs.append(np.array(x_next, dtype=float))
        restart_reason = None

        if self.mode == WARMUP:
            if t == self.epoch_start + cfg.block_len - 1:
                self._advance_block(t, events)
        else:
            j = self.block
            ended = [p for p in self.phases if p.end == t]
            for phase in ended:
                verdict = self.end_of_exploration_test(t, phase)
                events.append(
                    Event(t, "PhaseEnd", f"m={phase.scale},verdict={verdict}")
                )
                if verdict == "Fail":
                    restart_reason = f"phase-test(m={phase.scale})"
                    break
            self.phases = [p for p in self.phases if p.end > t]

            if restart_reason is None and t == self._block_end(j):
                verdict = self.end_of_block_test(t)
                if verdict == "Fail":
                    restart_reason = f"block-test(j={j})"
                else:
                    self._advance_block(t, events)

        if restart_reason is None and float(np.linalg.norm(x_next)) >= cfg.x_upper:
            events.append(Event(t, "StabilizationEnter"))
            self.mode = STABILIZING
            self.phases = []
        elif restart_reason is not None:
            events.append(Event(t, "EpochRestart", restart_reason))
            self._start_epoch(t + 1)

        self.events.extend(events)
        return events

    # -- restart tests ------------------------------------------------------

    def _fit(self, start: int, stop: int) -> OlsEstimate:
        """OLS over absolute steps [start, stop] inclusive."""
        ls, le = start - self.epoch_start, stop - self.epoch_start
        xs = np.array(self._xs[ls : le + 2])
        us = np.array(self._us[ls : le + 1])
        traj = Trajectory(
            xs, us, np.zeros(len(us)), np.zeros(len(us), dtype=int)
        )
        return ols_fit(traj, 0, len(us))

    def _test_statistic(self, est: OlsEstimate, length: int) -> float:
        """diff^2 * sqrt(length); Fail iff this reaches c_test^2."""
        diff = est.theta_hat.stacked() - self.prev_estimate.theta_hat.stacked()
        return float(np.linalg.norm(diff) ** 2) * math.sqrt(length)

    def end_of_exploration_test(self, t: int, phase: ExplorationPhase) -> str:
        if self.prev_estimate is None:
            return "Pass"
        length = 2**phase.scale * self.config.block_len
        try:
            est = self._fit(phase.start, phase.end)
        except SingularDesign:
            self.events.append(Event(t, "SingularDesign", f"phase m={phase.scale}"))
            return "Pass"
        stat = self._test_statistic(est, length)
        self.test_stats.append((t, f"phase-m{phase.scale}", stat))
        return "Fail" if stat >= self.config.c_test**2 else "Pass"

    def end_of_block_test(self, t: int) -> str:
        if self.prev_estimate is None:
            self._pending_block_fit = None
            return "Pass"
        j = self.block
        length = 2 ** (j - 1) * self.config.block_len
        try:
            est = self._fit(self._block_start(j), self._block_end(j))
        except SingularDesign:
            self.events.append(Event(t, "SingularDesign", f"block j={j}"))
            self._pending_block_fit = None
            return "Pass"
        self._pending_block_fit = est
        stat = self._test_statistic(est, length)
        self.test_stats.append((t, f"block-j{j}", stat))
        return "Fail" if stat >= self.config.c_test**2 else "Pass"

    # -- transitions --------------------------------------------------------

    def _advance_block(self, t: int, events: list[Event]) -> None:
        """Refit the estimate and gain, then enter the next block."""
        was_warmup = self.mode == WARMUP
        if was_warmup:
            try:
                est = self._fit(self.epoch_start, t)
            except SingularDesign:
                est = None
        else:
            # Reuse the fit computed by the end-of-block test when available.
            est = self._pending_block_fit
            self._pending_block_fit = None
            if est is None:
                try:
                    est = self._fit(
                        self._block_start(self.block), self._block_end(self.block)
                    )
                except SingularDesign:
                    est = None
        new_gain = None
        if est is not None:
            try:
                new_gain = optimal_gain(est.theta_hat, self.cost).k
            except NonConvergent:
                new_gain = None
        if new_gain is None:
            # Insufficient excitation or an unstabilizable estimate: keep a
            # safe gain for the next block rather than crashing or restarting.
            events.append(Event(t, "GainFallback"))
            new_gain = (
                self._gain
                if self._gain is not None
                else self.stab_gains.gain_at(min(t + 1, self.horizon - 1)).k
            )
        else:
            self.prev_estimate = est
        self._gain = new_gain
        self.gain_id += 1
        self.mode = BLOCK
        self.block = 1 if was_warmup else self.block + 1
        self.phases = []
        events.append(Event(t, "BlockAdvance", f"j={self.block}"))

    def _start_epoch(self, start: int) -> None:
        self.epoch += 1
        self.epoch_start = start
        self.mode = WARMUP
        self.block = 0
        self.phases = []
        self._gain = None
        self._last_stab_gain = None
        self.prev_estimate = None
        self._xs, self._us, self._sigmas = [], [], []


def new_controller(
    config: DynLqrConfig, stab_gains: GainSeq, cost: CostSpec, horizon: int
) -> DynLqrController:
    return DynLqrController(config, stab_gains, cost, horizon)
