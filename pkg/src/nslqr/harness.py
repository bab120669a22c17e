"""Simulation engine, regret accounting, audits, sweeps and calibration.

The RNG discipline derives one independent counter-based stream per
consumer (process noise, exploration noise, instance generation,
controller internals) from (master_seed, replication, stream name), so
changing one consumer never perturbs another stream's draws.
"""

from __future__ import annotations

import csv
import hashlib
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynlqr import (
    DynLqrConfig,
    DynLqrController,
    Event,
    default_config,
)
from .errors import Diverged, Unstable
from .estimation import Trajectory
from .instances import DynamicsSeq, GainSeq, stabilizing_sequence
from .lqr import (
    CostSpec,
    Gain,
    Theta,
    gain_from_value,
    solve_dare,
    solve_lyapunov,
)

DIVERGE_NORM = 1e9


def make_stream(master_seed: int, replication: int, name: str) -> np.random.Generator:
    """Independent, platform-stable stream keyed by (seed, replication, name)."""
    digest = hashlib.sha256(name.encode()).digest()
    tag = int.from_bytes(digest[:8], "little")
    ss = np.random.SeedSequence([int(master_seed), int(replication), tag])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class RegretReport:
    """Per-step costs, benchmarks, and cumulative dynamic regret."""

    costs: np.ndarray
    jstars: np.ndarray
    cumulative_regret: np.ndarray
    restarts: int
    stabilization_steps: int
    wall_seconds: float
    events: list[Event] = field(default_factory=list)
    diverged: bool = False

    @property
    def regret(self) -> float:
        return float(self.cumulative_regret[-1])


class JstarCache:
    """Optimal steady-state cost per distinct dynamics, keyed by bytes."""

    def __init__(self, cost: CostSpec):
        self.cost = cost
        self._cache: dict[bytes, float] = {}
        self._by_id: dict[int, float] = {}
        self._p_warm = None
        self.solves = 0

    def jstar(self, theta: Theta) -> float:
        # Fast path: segment iteration yields the same Theta object per
        # step, so an identity lookup avoids hashing matrix bytes.
        hit = self._by_id.get(id(theta))
        if hit is not None:
            return hit
        key = theta.key()
        if key not in self._cache:
            val = solve_dare(theta, self.cost, p0=self._p_warm)
            self._p_warm = val.p
            self.solves += 1
            self._cache[key] = self.cost.psi2 * float(np.trace(val.p))
        self._by_id[id(theta)] = self._cache[key]
        return self._cache[key]


def simulate(
    instance: DynamicsSeq,
    controller,
    seed: int,
    replication: int = 0,
) -> tuple[Trajectory, RegretReport]:
    """Run a controller over an instance from x_1 = 0.

    Process noise w_t ~ N(0, psi^2 I) comes from a dedicated stream; the
    controller owns a separate exploration stream.  Aborts with the
    `diverged` flag set if the state norm passes 1e9.
    """
    t0 = time.perf_counter()
    cost = instance.cost
    horizon = instance.horizon
    n, d = instance.n, instance.d
    noise_rng = make_stream(seed, replication, "noise")
    ctrl_rng = make_stream(seed, replication, "exploration")
    psi = np.sqrt(cost.psi2)
    jcache = JstarCache(cost)

    xs = np.zeros((horizon + 1, n))
    us = np.zeros((horizon, d))
    sigmas = np.zeros(horizon)
    gain_ids = np.zeros(horizon, dtype=int)
    costs = np.zeros(horizon)
    jstars = np.zeros(horizon)
    events: list[Event] = []
    stab_steps = 0
    diverged = False

    x = np.zeros(n)
    q, r = cost.q, cost.r
    noise = psi * noise_rng.standard_normal((horizon, n))
    steps_done = horizon
    for t, theta in enumerate(instance.thetas()):
        decision = controller.act(t, x, ctrl_rng)
        u = decision.u
        events.extend(decision.events)
        costs[t] = float(x @ q @ x + u @ r @ u)
        jstars[t] = jcache.jstar(theta)
        x_next = theta.a @ x + theta.b @ u + noise[t]
        events.extend(controller.observe(t, x_next))
        xs[t] = x
        us[t] = u
        sigmas[t] = decision.sigma
        gain_ids[t] = decision.gain_id
        if decision.block == -1:
            stab_steps += 1
        x = x_next
        if float(x @ x) > DIVERGE_NORM**2:
            diverged = True
            steps_done = t + 1
            break
    xs[steps_done] = x

    costs = costs[:steps_done]
    jstars = jstars[:steps_done]
    traj = Trajectory(
        xs[: steps_done + 1], us[:steps_done], sigmas[:steps_done], gain_ids[:steps_done]
    )
    restarts = sum(1 for e in events if e.kind == "EpochRestart")
    report = RegretReport(
        costs=costs,
        jstars=jstars,
        cumulative_regret=np.cumsum(costs - jstars),
        restarts=restarts,
        stabilization_steps=stab_steps,
        wall_seconds=time.perf_counter() - t0,
        events=events,
        diverged=diverged,
    )
    return traj, report


@dataclass
class AuditReport:
    """Per-step residuals of the cost-difference identity and term sums.

    Terms: exploitation J_t(K_t) - J*_t; boundary telescoping of the
    quadratic value; variation of the value matrix; a zero-mean martingale
    term; and the injected exploration energy.
    """

    residuals: np.ndarray
    audited: np.ndarray  # bool mask over steps
    max_residual: float
    term_sums: dict[str, float]
    n_excluded: int


def regret_decomposition_audit(
    traj: Trajectory,
    instance: DynamicsSeq,
    gains: list[np.ndarray],
    report: RegretReport,
) -> AuditReport:
    """Check the per-step algebraic decomposition of cost minus benchmark.

    Steps whose (Theta_t, K_t) pair admits no Lyapunov solution are excluded
    and counted, not raised.  The martingale term includes both the
    next-state fluctuation and the realized control-noise fluctuation of the
    instantaneous cost, so the identity holds to floating point per step.
    """
    cost = instance.cost
    q, r, psi2 = cost.q, cost.r, cost.psi2
    steps = len(report.costs)
    residuals = np.zeros(steps)
    audited = np.zeros(steps, dtype=bool)
    sums = {k: 0.0 for k in ("exploitation", "boundary", "variation", "martingale", "exploration")}
    lyap_cache: dict[tuple[bytes, bytes], np.ndarray | None] = {}

    def value_for(theta: Theta, k: np.ndarray) -> np.ndarray | None:
        key = (theta.key(), k.tobytes())
        if key not in lyap_cache:
            try:
                lyap_cache[key] = solve_lyapunov(theta, Gain(k), cost).p
            except Unstable:
                lyap_cache[key] = None
        return lyap_cache[key]

    thetas = list(instance.thetas())[:steps]
    tr_r = float(np.trace(r))

    def audit_one(t: int) -> None:
        theta, k = thetas[t], gains[t]
        p = value_for(theta, k)
        if p is None:
            return
        same_seg = t + 1 < steps and traj.gain_ids[t + 1] == traj.gain_ids[t]
        p_next = value_for(thetas[t + 1], gains[t + 1]) if same_seg else p
        if p_next is None:
            return
        x, x1, sig = traj.xs[t], traj.xs[t + 1], traj.sigmas[t]
        btpb = theta.b.T @ p @ theta.b
        m = (theta.a + theta.b @ k) @ x
        j_k = psi2 * float(np.trace(p))
        jstar = report.jstars[t]
        exp_cost = float(x @ q @ x + x @ k.T @ r @ k @ x) + sig**2 * tr_r
        exp_next_quad = (
            float(m @ p @ m)
            + sig**2 * float(np.trace(btpb))
            + psi2 * float(np.trace(p))
        )
        term1 = j_k - jstar
        term2 = float(x @ p @ x - x1 @ p_next @ x1)
        term3 = float(x1 @ (p_next - p) @ x1)
        term4 = (report.costs[t] - exp_cost) + (float(x1 @ p @ x1) - exp_next_quad)
        term5 = sig**2 * float(np.trace(r + btpb))
        total = term1 + term2 + term3 + term4 + term5
        residuals[t] = (report.costs[t] - jstar) - total
        audited[t] = True
        sums["exploitation"] += term1
        sums["boundary"] += term2
        sums["variation"] += term3
        sums["martingale"] += term4
        sums["exploration"] += term5

    # Maximal runs with constant (Theta_t, K_t).  In the interior of a run
    # p_next = p regardless of gain ids, so those steps vectorize; the last
    # step of each run goes through the scalar path.
    keys = [(th.key(), k.tobytes()) for th, k in zip(thetas, gains)]
    start = 0
    while start < steps:
        end = start
        while end + 1 < steps and keys[end + 1] == keys[start]:
            end += 1
        theta, k = thetas[start], gains[start]
        p = value_for(theta, k)
        if p is None:
            start = end + 1
            continue
        if end > start:
            sl = slice(start, end)
            xs = traj.xs[start:end]
            x1s = traj.xs[start + 1 : end + 1]
            sig2 = traj.sigmas[sl] ** 2
            btpb = theta.b.T @ p @ theta.b
            ms = xs @ (theta.a + theta.b @ k).T
            qf = lambda v, mat: np.einsum("ti,ij,tj->t", v, mat, v)
            j_k = psi2 * float(np.trace(p))
            t1 = j_k - report.jstars[sl]
            t2 = qf(xs, p) - qf(x1s, p)
            t4 = (
                report.costs[sl]
                - (qf(xs, q + k.T @ r @ k) + sig2 * tr_r)
                + qf(x1s, p)
                - (qf(ms, p) + sig2 * float(np.trace(btpb)) + j_k)
            )
            t5 = sig2 * float(np.trace(r + btpb))
            total = t1 + t2 + t4 + t5
            residuals[sl] = (report.costs[sl] - report.jstars[sl]) - total
            audited[sl] = True
            sums["exploitation"] += float(t1.sum())
            sums["boundary"] += float(t2.sum())
            sums["martingale"] += float(t4.sum())
            sums["exploration"] += float(t5.sum())
        audit_one(end)
        start = end + 1

    max_resid = float(np.max(np.abs(residuals[audited]))) if audited.any() else 0.0
    return AuditReport(
        residuals=residuals,
        audited=audited,
        max_residual=max_resid,
        term_sums=sums,
        n_excluded=int(steps - audited.sum()),
    )


# -- controller factories ---------------------------------------------------


def build_controller(
    name: str,
    instance: DynamicsSeq,
    seed: int,
    replication: int = 0,
    dynlqr_config: DynLqrConfig | None = None,
    restart_window: int | None = None,
    restart_sigma2=None,
    fixed_gain: Gain | None = None,
    stab_gains: GainSeq | None = None,
    c_test: float = 2.0,
):
    """Instantiate a controller by name against an instance."""
    from .baselines import (
        FixedGainController,
        OracleCeController,
        RestartConfig,
        RestartLqrController,
    )

    cost = instance.cost
    if name == "dynlqr":
        if stab_gains is None:
            stab_gains = stabilizing_sequence(instance, "oracle-ce")
        cfg = dynlqr_config or default_config(
            instance.n, instance.d, instance.horizon, c_test=c_test
        )
        return DynLqrController(cfg, stab_gains, cost, instance.horizon)
    if name == "restart":
        if restart_window is None:
            raise ValueError("restart controller needs restart_window")
        warm = stabilizing_sequence(instance, "oracle-ce").gain_at(0)
        rc = RestartConfig(restart_window, warm, restart_sigma2)
        return RestartLqrController(rc, cost, instance.horizon)
    if name == "oracle":
        return OracleCeController(instance)
    if name == "fixed":
        if fixed_gain is None:
            val = solve_dare(instance.theta_at(0), cost)
            fixed_gain = gain_from_value(instance.theta_at(0), cost, val)
        return FixedGainController(fixed_gain, instance)
    raise ValueError(f"unknown controller {name!r}")


def calibrate_c_test(
    instance: DynamicsSeq,
    seeds: range | list[int] = range(10),
    quantile: float = 0.95,
    margin: float = 1.10,
    stab_gains: GainSeq | None = None,
    config: DynLqrConfig | None = None,
) -> float:
    """Pick c_test so stationary pilot runs rarely restart.

    Runs the controller with an effectively infinite threshold, records the
    per-run maximum normalized test statistic, and returns margin * sqrt of
    the requested quantile across runs.  At the returned threshold the
    false-restart rate is at most 1 - quantile on the pilot family.
    """
    if stab_gains is None:
        stab_gains = stabilizing_sequence(instance, "oracle-ce")
    maxima = []
    for s in seeds:
        cfg = config or default_config(
            instance.n, instance.d, instance.horizon, c_test=1e9
        )
        if cfg.c_test < 1e9:
            cfg = DynLqrConfig(
                cfg.block_len, cfg.c0, 1e9, cfg.nu0, cfg.x_upper, cfg.x_lower,
                cfg.max_block_index,
            )
        ctrl = DynLqrController(cfg, stab_gains, instance.cost, instance.horizon)
        simulate(instance, ctrl, int(s))
        stats = [v for (_, _, v) in ctrl.test_stats]
        maxima.append(max(stats) if stats else 0.0)
    level = float(np.quantile(maxima, quantile))
    return float(np.sqrt(margin * max(level, 1e-12)))


# -- sweeps -----------------------------------------------------------------

RESULT_COLUMNS = [
    "cell", "controller", "T", "V_T", "seed",
    "regret", "restarts", "stab_steps", "wall_ms",
]
TRACE_COLUMNS = ["t", "cost", "jstar", "sigma2", "cum_regret", "epoch", "block", "event"]


@dataclass(frozen=True)
class SweepCell:
    index: int
    controller: str
    horizon: int
    v_total: float
    seed: int
    params: tuple = ()


def _run_cell(args):
    cell, make_instance, controller_kwargs = args
    try:
        instance = make_instance(cell)
        ctrl = build_controller(
            cell.controller, instance, cell.seed, **dict(controller_kwargs)
        )
        traj, report = simulate(instance, ctrl, cell.seed)
        row = [
            cell.index, cell.controller, cell.horizon, cell.v_total, cell.seed,
            repr(report.regret), report.restarts, report.stabilization_steps,
            round(report.wall_seconds * 1000.0, 3),
        ]
        return cell.index, row, traj, report, None
    except Exception as exc:  # per-cell failures recorded, sweep continues
        row = [
            cell.index, cell.controller, cell.horizon, cell.v_total, cell.seed,
            "nan", -1, -1, 0.0,
        ]
        return cell.index, row, None, None, f"{type(exc).__name__}: {exc}"


def run_sweep(
    cells: list[SweepCell],
    make_instance,
    controller_kwargs=(),
    workers: int = 1,
):
    """Run every cell and return rows in deterministic cell-index order.

    make_instance maps a SweepCell to a DynamicsSeq and must be picklable
    when workers > 1.  Output is identical regardless of parallelism.
    """
    args = [(c, make_instance, tuple(controller_kwargs)) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, args))
    else:
        results = [_run_cell(a) for a in args]
    results.sort(key=lambda r: r[0])
    return results


def results_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for _, row, *_ in results:
        writer.writerow(row)
    return buf.getvalue()


def trace_csv(traj: Trajectory, report: RegretReport) -> str:
    """Per-step trace with the documented columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    ev_by_t: dict[int, list[str]] = {}
    for e in report.events:
        ev_by_t.setdefault(e.t, []).append(str(e))
    for t in range(len(report.costs)):
        writer.writerow([
            t,
            repr(float(report.costs[t])),
            repr(float(report.jstars[t])),
            repr(float(traj.sigmas[t] ** 2)),
            repr(float(report.cumulative_regret[t])),
            "", "",
            ";".join(ev_by_t.get(t, [])),
        ])
    return buf.getvalue()


def audit_csv(audit: AuditReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "audited", "residual"])
    for t in range(len(audit.residuals)):
        writer.writerow([t, int(audit.audited[t]), repr(float(audit.residuals[t]))])
    return buf.getvalue()
