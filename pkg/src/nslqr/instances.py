"""Non-stationary problem instances.

Generators for drifting, switching, and the two adversarial 1-D families,
variation accounting, stabilizing gain-sequence synthesis, and the
sequential-stability product-norm checker.  All generators are pure
functions of (parameters, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleBudget, NonConvergent, StabilizationFailed, Unstable
from .lqr import (
    CostSpec,
    Gain,
    Theta,
    closed_loop,
    gain_from_value,
    operator_norm,
    solve_dare,
    spectral_radius,
)

STABILITY_WINDOW_CAP = 200
MARGIN_RADIUS = 0.95


@dataclass(frozen=True)
class DynamicsSeq:
    """Run-length encoded sequence of dynamics over a horizon.

    segments is a tuple of (length, Theta); lengths sum to T exactly.
    """

    horizon: int
    segments: tuple[tuple[int, Theta], ...]
    cost: CostSpec
    flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        total = sum(length for length, _ in self.segments)
        if total != self.horizon:
            raise ValueError(f"segment lengths sum to {total}, expected {self.horizon}")
        n = self.segments[0][1].n
        d = self.segments[0][1].d
        for _, th in self.segments:
            if th.n != n or th.d != d:
                raise ValueError("inconsistent dimensions across segments")
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def n(self) -> int:
        return self.segments[0][1].n

    @property
    def d(self) -> int:
        return self.segments[0][1].d

    def theta_at(self, t: int) -> Theta:
        """Dynamics in force at step t (0-based)."""
        if not 0 <= t < self.horizon:
            raise IndexError(f"t={t} outside [0, {self.horizon})")
        acc = 0
        for length, th in self.segments:
            acc += length
            if t < acc:
                return th
        raise AssertionError("unreachable")

    def thetas(self):
        """Iterate the per-step dynamics (expands the run-length encoding)."""
        for length, th in self.segments:
            for _ in range(length):
                yield th


def stationary(theta: Theta, cost: CostSpec, horizon: int) -> DynamicsSeq:
    return DynamicsSeq(horizon, ((horizon, theta),), cost)


@dataclass(frozen=True)
class VariationReport:
    """Per-step and total Frobenius variation of a dynamics sequence."""

    per_step: np.ndarray  # length T-1, entry t is ||Theta_{t+1} - Theta_t||_F
    total: float

    def interval(self, s: int, e: int) -> float:
        """Variation accumulated over [s, e] (0-based, inclusive)."""
        if e < s:
            raise ValueError("e must be >= s")
        return float(np.sum(self.per_step[s:e]))

    @property
    def switch_count(self) -> int:
        return int(np.count_nonzero(self.per_step))


def total_variation(seq: DynamicsSeq) -> VariationReport:
    per_step = np.zeros(max(seq.horizon - 1, 0))
    pos = 0
    prev = None
    for length, th in seq.segments:
        if prev is not None:
            per_step[pos - 1] = np.linalg.norm(th.stacked() - prev.stacked())
        prev = th
        pos += length
    return VariationReport(per_step, float(per_step.sum()))


def _stabilizable_margin(theta: Theta, cost: CostSpec, p0=None):
    """Return (ok, P) where ok means radius(A + B K*) <= MARGIN_RADIUS."""
    try:
        val = solve_dare(theta, cost, p0=p0)
    except NonConvergent:
        return False, None
    k = gain_from_value(theta, cost, val)
    return spectral_radius(closed_loop(theta, k)) <= MARGIN_RADIUS, val.p


def _random_base_system(n: int, d: int, rng: np.random.Generator) -> Theta:
    a = rng.normal(size=(n, n))
    a *= 0.5 / max(spectral_radius(a), 1e-12)
    b = rng.normal(size=(n, d))
    b *= 1.0 / max(operator_norm(b), 1e-12)
    return Theta(a, b)


def _unit_direction(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(n, n + d))
    return g / np.linalg.norm(g)


def build_drift_instance(
    n: int,
    d: int,
    horizon: int,
    v_total: float,
    mode: str = "smooth-sine",
    seed: int = 0,
    cost: CostSpec | None = None,
) -> DynamicsSeq:
    """Drifting instance whose total variation lands within 5% of v_total.

    'smooth-sine' moves the dynamics sinusoidally along a fixed random
    direction; 'random-walk' takes equal-size steps in random directions
    with a pull-back that keeps the path near the base system.
    """
    if v_total < 0:
        raise ValueError("v_total must be >= 0")
    if mode not in ("smooth-sine", "random-walk"):
        raise ValueError(f"unknown drift mode {mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    cost = cost or CostSpec(np.eye(n), np.eye(d), 1.0)
    base = _random_base_system(n, d, rng)
    ok, _ = _stabilizable_margin(base, cost)
    if not ok:
        raise InfeasibleBudget("base system failed the stabilizability margin")
    if v_total == 0 or horizon == 1:
        return stationary(base, cost, horizon)

    base_m = base.stacked()
    deltas = np.empty((horizon, n, n + d))
    if mode == "smooth-sine":
        direction = _unit_direction(n, d, rng)
        cycles = max(1, horizon // 2048)
        phases = np.sin(2 * np.pi * cycles * np.arange(horizon) / horizon)
        raw_var = float(np.sum(np.abs(np.diff(phases))))
        amp = v_total / raw_var
        for t in range(horizon):
            deltas[t] = amp * phases[t] * direction
        max_dev = amp
    else:
        step = v_total / (horizon - 1)
        cap = min(10 * step, 0.25)
        cur = np.zeros((n, n + d))
        for t in range(horizon):
            deltas[t] = cur
            if t == horizon - 1:
                break
            g = rng.normal(size=(n, n + d))
            if np.linalg.norm(cur) > cap:
                g -= 2.0 * cur * np.linalg.norm(g) / np.linalg.norm(cur)
            cur = cur + step * g / np.linalg.norm(g)
        max_dev = cap + step

    # Verify margin on the extreme deviations, then scan with warm starts.
    segs = []
    p_warm = None
    for t in range(horizon):
        th = Theta(base_m[:, :n] + deltas[t][:, :n], base_m[:, n:] + deltas[t][:, n:])
        ok, p_warm = _stabilizable_margin(th, cost, p0=p_warm)
        if not ok:
            raise InfeasibleBudget(
                f"budget {v_total} breaks the stabilizability margin at t={t} "
                f"(max deviation {max_dev:.3g})"
            )
        segs.append((1, th))
    return DynamicsSeq(horizon, tuple(segs), cost)


def build_switching_instance(
    n: int,
    d: int,
    horizon: int,
    pieces: int,
    jump_size: float,
    seed: int = 0,
    cost: CostSpec | None = None,
) -> DynamicsSeq:
    """Piecewise-constant instance with `pieces` segments and jumps of
    Frobenius size jump_size between consecutive pieces.

    Switch times are uniform without replacement over {1..T-1} (0-based;
    the start t=0 is excluded).  Jump directions are drawn on the Frobenius
    sphere with rejection (<= 100 tries) to preserve the margin.
    """
    if not 1 <= pieces <= horizon:
        raise ValueError("need 1 <= pieces <= horizon")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 202]))
    cost = cost or CostSpec(np.eye(n), np.eye(d), 1.0)
    base = _random_base_system(n, d, rng)
    ok, _ = _stabilizable_margin(base, cost)
    if not ok:
        raise InfeasibleBudget("base system failed the stabilizability margin")
    if pieces == 1:
        return stationary(base, cost, horizon)

    switch_times = np.sort(rng.choice(np.arange(1, horizon), size=pieces - 1, replace=False))
    bounds = [0, *switch_times.tolist(), horizon]
    cur = base
    segs = []
    for idx in range(pieces):
        length = bounds[idx + 1] - bounds[idx]
        segs.append((length, cur))
        if idx == pieces - 1:
            break
        nxt = None
        for _ in range(100):
            step = jump_size * _unit_direction(n, d, rng)
            cand_m = cur.stacked() + step
            # Bias retries back toward the base to avoid a random walk into
            # unstabilizable territory.
            if np.linalg.norm(cand_m - base.stacked()) > 2.0 * jump_size + 0.5:
                continue
            cand = Theta(cand_m[:, :n], cand_m[:, n:])
            ok, _ = _stabilizable_margin(cand, cost)
            if ok:
                nxt = cand
                break
        if nxt is None:
            raise InfeasibleBudget(
                f"could not place jump {idx + 1} of size {jump_size} in 100 tries"
            )
        cur = nxt
    return DynamicsSeq(horizon, tuple(segs), cost)


ONE_D_A = 1.0 / np.sqrt(5.0)


def _one_d_cost() -> CostSpec:
    return CostSpec(np.eye(1), np.eye(1), 1.0)


def build_pasted_lower_bound(
    horizon: int, v_total: float, seed: int = 0
) -> DynamicsSeq:
    """Concatenation of hard 1-D sub-instances with re-randomized input sign.

    Each sub-instance has a = 1/sqrt(5), b = chi * sqrt(eps) with chi a fresh
    Rademacher sign, length floor(1/(4 eps^2)), where eps = (V_T/(8T))^(2/5).
    The concatenation is truncated or padded (by extending the final piece)
    to the horizon.
    """
    eps = (v_total / (8.0 * horizon)) ** 0.4 if v_total > 0 else 0.0
    if not 0.0 < eps <= 0.04:
        if v_total == 0:
            return DynamicsSeq(
                horizon,
                ((horizon, Theta([[ONE_D_A]], [[0.0]])),),
                _one_d_cost(),
                frozenset({"degenerate-budget"}),
            )
        raise ValueError(f"eps={eps:.4g} outside (0, 0.04]; scale V_T = o(T)")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 303]))
    n_sub = int(np.floor(v_total / (2.0 * np.sqrt(eps))))
    sub_len = int(np.floor(1.0 / (4.0 * eps * eps)))
    if n_sub < 1:
        chi = 1.0 if rng.random() < 0.5 else -1.0
        return DynamicsSeq(
            horizon,
            ((horizon, Theta([[ONE_D_A]], [[chi * np.sqrt(eps)]])),),
            _one_d_cost(),
            frozenset({"degenerate-budget"}),
        )
    segs = []
    remaining = horizon
    while remaining > 0:
        chi = 1.0 if rng.random() < 0.5 else -1.0
        length = min(sub_len, remaining)
        if remaining - length < sub_len // 2:
            length = remaining  # pad the tail into the final sub-instance
        segs.append((length, Theta([[ONE_D_A]], [[chi * np.sqrt(eps)]])))
        remaining -= length
    return DynamicsSeq(horizon, tuple(segs), _one_d_cost(), frozenset())


def build_restartlqr_adversary(
    horizon: int, v_total: float, seed: int = 0
) -> DynamicsSeq:
    """1-D adversary with rare O(1) jumps and frequent eps-size jumps in b.

    a = 1/sqrt(5) throughout; b_0 = eps = 0.05 (V_T/T)^(1/6).  At each later
    step, b resamples to +/-0.05 w.p. V_T/(2T), to +/-eps w.p.
    (V_T/(4T))^(5/6) (fair signs), otherwise holds its value.
    """
    ratio = v_total / horizon
    if ratio > 0.1:
        raise ValueError("requires V_T / T <= 0.1")
    eps = 0.05 * ratio ** (1.0 / 6.0)
    if v_total == 0:
        return DynamicsSeq(
            horizon,
            ((horizon, Theta([[ONE_D_A]], [[eps]])),),
            _one_d_cost(),
            frozenset({"degenerate-budget"}),
        )
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 404]))
    p_big = ratio / 2.0
    p_small = (ratio / 4.0) ** (5.0 / 6.0)
    u = rng.random(horizon)
    signs = np.where(rng.random(horizon) < 0.5, 1.0, -1.0)
    b = np.empty(horizon)
    b[0] = eps
    for t in range(1, horizon):
        if u[t] < p_big:
            b[t] = signs[t] * 0.05
        elif u[t] < p_big + p_small:
            b[t] = signs[t] * eps
        else:
            b[t] = b[t - 1]
    segs = []
    start = 0
    for t in range(1, horizon + 1):
        if t == horizon or b[t] != b[start]:
            segs.append((t - start, Theta([[ONE_D_A]], [[b[start]]])))
            start = t
    return DynamicsSeq(horizon, tuple(segs), _one_d_cost())


@dataclass(frozen=True)
class GainSeq:
    """Per-step feedback gains aligned with a DynamicsSeq.

    Run-length encoded like DynamicsSeq; lengths sum to the horizon.
    """

    horizon: int
    segments: tuple[tuple[int, Gain], ...]

    def __post_init__(self):
        total = sum(length for length, _ in self.segments)
        if total != self.horizon:
            raise ValueError(f"segment lengths sum to {total}, expected {self.horizon}")

    def gain_at(self, t: int) -> Gain:
        if not 0 <= t < self.horizon:
            raise IndexError(f"t={t} outside [0, {self.horizon})")
        acc = 0
        for length, g in self.segments:
            acc += length
            if t < acc:
                return g
        raise AssertionError("unreachable")

    def gains(self):
        for length, g in self.segments:
            for _ in range(length):
                yield g

    @staticmethod
    def from_list(gains: list[Gain]) -> "GainSeq":
        segs = []
        start = 0
        for t in range(1, len(gains) + 1):
            if t == len(gains) or gains[t] is not gains[start]:
                segs.append((t - start, gains[start]))
                start = t
        return GainSeq(len(gains), tuple(segs))


@dataclass(frozen=True)
class StabilityCert:
    """Result of the product-norm sequential-stability check.

    Valid iff max_violation <= 0: then every closed-loop product over the
    examined windows satisfies ||Phi_{b:a}|| <= kappa * rho^(b-a).
    """

    kappa: float
    rho: float
    max_violation: float
    worst_interval: tuple[int, int]

    @property
    def valid(self) -> bool:
        return self.max_violation <= 0.0


def check_sequential_stability(
    seq: DynamicsSeq, gains: GainSeq, kappa: float, rho: float
) -> StabilityCert:
    """Check ||Phi_b ... Phi_a||_op <= kappa * rho^(b-a) over all windows of
    length at most min(T-1, 200), where Phi_t = A_t + B_t K_t.

    Violations are reported in the certificate, never raised.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    horizon = seq.horizon
    n = seq.n
    cap = min(horizon - 1, STABILITY_WINDOW_CAP) if horizon > 1 else 0
    phis = np.empty((horizon, n, n))
    for t, (th, g) in enumerate(zip(seq.thetas(), gains.gains())):
        phis[t] = closed_loop(th, g)

    max_violation = -np.inf
    worst = (0, 0)
    # products[j] holds Phi_{b:a} for start a = b - j, i.e. window length j+1.
    products = phis[0][None].copy()
    for b in range(horizon):
        if b > 0:
            shifted = np.einsum("ij,kjl->kil", phis[b], products[:cap])
            products = np.concatenate([phis[b][None], shifted], axis=0)
        norms = np.linalg.svd(products, compute_uv=False)[:, 0]
        lengths = np.arange(len(products))  # b - a
        viol = norms - kappa * rho ** lengths
        idx = int(np.argmax(viol))
        if viol[idx] > max_violation:
            max_violation = float(viol[idx])
            worst = (b - idx, b)
    return StabilityCert(kappa, rho, max_violation, worst)


_CERT_GRID = [(2.0, 0.9), (5.0, 0.95), (10.0, 0.99), (20.0, 0.995), (50.0, 0.999)]


def stabilizing_sequence(
    seq: DynamicsSeq,
    mode: str = "oracle-ce",
    lag: int = 0,
    delta: float = 0.0,
    seed: int = 0,
) -> GainSeq:
    """Synthesize a certified stabilizing gain sequence for an instance.

    oracle-ce uses K*(Theta_t); lagged-oracle uses K*(Theta_{max(0, t-lag)});
    perturbed adds a uniform perturbation of norm <= delta to the oracle
    gain.  The output must pass the sequential-stability check at some
    (kappa, rho) on a fixed grid, else StabilizationFailed is raised.
    """
    if mode not in ("oracle-ce", "lagged-oracle", "perturbed"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 505]))
    # One oracle gain per distinct segment, warm-starting the Riccati solve.
    seg_gains: list[Gain] = []
    p_warm = None
    for _, th in seq.segments:
        val = solve_dare(th, seq.cost, p0=p_warm)
        p_warm = val.p
        seg_gains.append(gain_from_value(th, seq.cost, val))

    per_step: list[Gain] = []
    for g, (length, _) in zip(seg_gains, seq.segments):
        per_step.extend([g] * length)
    if mode == "lagged-oracle" and lag > 0:
        per_step = [per_step[max(0, t - lag)] for t in range(seq.horizon)]
    elif mode == "perturbed" and delta > 0:
        perturbed = []
        for g in per_step:
            e = rng.normal(size=g.k.shape)
            e *= rng.uniform(0, delta) / max(np.linalg.norm(e), 1e-12)
            perturbed.append(Gain(g.k + e))
        per_step = perturbed
    gains = GainSeq.from_list(per_step)

    for kappa, rho in _CERT_GRID:
        cert = check_sequential_stability(seq, gains, kappa, rho)
        if cert.valid:
            return gains
    raise StabilizationFailed(
        f"no certificate on the (kappa, rho) grid for mode {mode!r}"
    )


def fixed_gain_certificate(
    seq: DynamicsSeq, gain: Gain, kappa: float = 10.0, rho: float = 0.995
) -> StabilityCert:
    """Certify a single fixed gain against every step of an instance."""
    gains = GainSeq(seq.horizon, ((seq.horizon, gain),))
    cert = check_sequential_stability(seq, gains, kappa, rho)
    if not cert.valid:
        raise Unstable(
            f"fixed gain violates ({kappa}, {rho}) by {cert.max_violation:.3g}"
        )
    return cert


def to_json(seq: DynamicsSeq) -> str:
    """Serialize to the documented JSON schema (row-major matrix arrays)."""
    doc = {
        "n": seq.n,
        "d": seq.d,
        "T": seq.horizon,
        "psi2": seq.cost.psi2,
        "Q": seq.cost.q.flatten().tolist(),
        "R": seq.cost.r.flatten().tolist(),
        "segments": [
            {
                "len": length,
                "A": th.a.flatten().tolist(),
                "B": th.b.flatten().tolist(),
            }
            for length, th in seq.segments
        ],
    }
    return json.dumps(doc)


def from_json(text: str) -> DynamicsSeq:
    doc = json.loads(text)
    n, d = int(doc["n"]), int(doc["d"])
    cost = CostSpec(
        np.asarray(doc["Q"], dtype=float).reshape(n, n),
        np.asarray(doc["R"], dtype=float).reshape(d, d),
        float(doc["psi2"]),
    )
    segs = tuple(
        (
            int(s["len"]),
            Theta(
                np.asarray(s["A"], dtype=float).reshape(n, n),
                np.asarray(s["B"], dtype=float).reshape(n, d),
            ),
        )
        for s in doc["segments"]
    )
    return DynamicsSeq(int(doc["T"]), segs, cost)
