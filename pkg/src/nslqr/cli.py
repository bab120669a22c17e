"""Command-line front end: instance generation, runs, sweeps, audits.

Configuration comes from flags plus an optional TOML file with [instance],
[controller.dynlqr], [controller.restart] and [sweep] tables; flags win
over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from . import harness
from .dynlqr import DynLqrConfig, default_config
from .instances import (
    build_drift_instance,
    build_pasted_lower_bound,
    build_restartlqr_adversary,
    build_switching_instance,
    from_json,
    stationary,
    to_json,
    total_variation,
)
from .lqr import CostSpec, Theta


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _build_instance(params: dict):
    family = params.get("family", "drift")
    n = int(params.get("n", 2))
    d = int(params.get("d", 1))
    horizon = int(params.get("T", 10_000))
    v_total = float(params.get("V_T", 1.0))
    seed = int(params.get("seed", 0))
    if family == "drift":
        return build_drift_instance(
            n, d, horizon, v_total, params.get("mode", "smooth-sine"), seed
        )
    if family == "switching":
        return build_switching_instance(
            n, d, horizon,
            int(params.get("pieces", 5)), float(params.get("jump_size", 0.5)), seed,
        )
    if family == "pasted":
        return build_pasted_lower_bound(horizon, v_total, seed)
    if family == "adversary":
        return build_restartlqr_adversary(horizon, v_total, seed)
    if family == "stationary":
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(n, n))
        a *= 0.5 / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-12)
        b = rng.normal(size=(n, d))
        return stationary(Theta(a, b), CostSpec(np.eye(n), np.eye(d)), horizon)
    raise SystemExit(f"unknown instance family {family!r}")


def _instance_from_args(args, cfg: dict):
    if getattr(args, "instance", None):
        return from_json(Path(args.instance).read_text())
    params = dict(cfg.get("instance", {}))
    if args.seed is not None:
        params["seed"] = args.seed
    return _build_instance(params)


def _make_controller(name: str, instance, seed: int, cfg: dict):
    kwargs = {}
    dl = cfg.get("controller", {}).get("dynlqr", {})
    if name == "dynlqr" and dl:
        base = default_config(
            instance.n, instance.d, instance.horizon,
            c_test=float(dl.get("c_test", 2.0)),
        )
        kwargs["dynlqr_config"] = DynLqrConfig(
            block_len=int(dl.get("block_len", base.block_len)),
            c0=float(dl.get("c0", base.c0)),
            c_test=float(dl.get("c_test", 2.0)),
            nu0=float(dl.get("nu0", base.nu0)),
            x_upper=float(dl.get("x_upper", base.x_upper)),
            x_lower=float(dl.get("x_lower", base.x_lower)),
        )
    rs = cfg.get("controller", {}).get("restart", {})
    if name == "restart":
        kwargs["restart_window"] = int(rs.get("window", 256))
        if "sigma2" in rs:
            kwargs["restart_sigma2"] = float(rs["sigma2"])
    return harness.build_controller(name, instance, seed, **kwargs)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_instance(args) -> int:
    cfg = _load_config(args.config)
    if args.action == "gen":
        params = dict(cfg.get("instance", {}))
        if args.seed is not None:
            params["seed"] = args.seed
        _write(args.out, to_json(_build_instance(params)) + "\n")
        return 0
    seq = from_json(Path(args.instance).read_text())
    var = total_variation(seq)
    info = {
        "n": seq.n, "d": seq.d, "T": seq.horizon,
        "segments": len(seq.segments),
        "total_variation": var.total,
        "switches": var.switch_count,
        "flags": sorted(seq.flags),
    }
    _write(args.out, json.dumps(info, indent=2) + "\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else 0
    instance = _instance_from_args(args, cfg)
    ctrl = _make_controller(args.controller, instance, seed, cfg)
    traj, report = harness.simulate(instance, ctrl, seed)
    _write(args.out, harness.trace_csv(traj, report))
    print(
        f"regret={report.regret:.6g} restarts={report.restarts} "
        f"stab_steps={report.stabilization_steps} "
        f"wall_s={report.wall_seconds:.3f} diverged={report.diverged}",
        file=sys.stderr,
    )
    return 1 if report.diverged else 0


def cmd_audit(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else 0
    instance = _instance_from_args(args, cfg)
    ctrl = _make_controller(args.controller, instance, seed, cfg)
    traj, report = harness.simulate(instance, ctrl, seed)
    thetas = list(instance.thetas())
    # Reconstruct per-step gains from the closed-loop residual is not possible
    # in general; audit the fixed-gain and oracle controllers where the played
    # gain is known exactly.
    if args.controller == "oracle":
        from .lqr import optimal_gain

        gains = [optimal_gain(th, instance.cost).k for th in thetas[: len(report.costs)]]
    elif args.controller == "fixed":
        gains = [ctrl.k] * len(report.costs)
    else:
        raise SystemExit("audit supports the oracle and fixed controllers")
    audit = harness.regret_decomposition_audit(traj, instance, gains, report)
    _write(args.out, harness.audit_csv(audit))
    print(
        f"max_residual={audit.max_residual:.3g} excluded={audit.n_excluded}",
        file=sys.stderr,
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    sw = cfg.get("sweep", {})
    controllers = sw.get("controllers", ["dynlqr"])
    horizons = [int(t) for t in sw.get("T", [4096])]
    budgets = [float(v) for v in sw.get("V_T", [1.0])]
    seeds = [int(s) for s in sw.get("seeds", [0])]
    family = sw.get("family", "drift")
    cells = []
    idx = 0
    for name in controllers:
        for horizon in horizons:
            for v in budgets:
                for s in seeds:
                    cells.append(harness.SweepCell(idx, name, horizon, v, s))
                    idx += 1

    def make_instance(cell):
        return _build_instance(
            {
                "family": family,
                "n": sw.get("n", 2),
                "d": sw.get("d", 1),
                "T": cell.horizon,
                "V_T": cell.v_total,
                "seed": cell.seed,
            }
        )

    results = harness.run_sweep(cells, make_instance, workers=args.threads)
    out_dir = Path(args.out or "sweep_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(harness.results_csv(results))
    if sw.get("traces", False):
        for index, _, traj, report, err in results:
            if err is None:
                (out_dir / f"trace_{index}.csv").write_text(
                    harness.trace_csv(traj, report)
                )
    failures = [(i, err) for i, _, _, _, err in results if err]
    for i, err in failures:
        print(f"cell {i} failed: {err}", file=sys.stderr)
    print(f"wrote {out_dir / 'results.csv'} ({len(cells)} cells)", file=sys.stderr)
    return 1 if failures else 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    instance = _instance_from_args(args, cfg)
    seeds = range(args.seed if args.seed else 10)
    c = harness.calibrate_c_test(instance, seeds=list(seeds))
    print(f"c_test={c:.6g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nslqr", description="Online control of non-stationary LQR systems."
    )
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", help="output path ('-' for stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("instance", help="generate or inspect instances")
    p.add_argument("action", choices=["gen", "info"])
    p.add_argument("--instance", help="instance JSON (for info)")
    p.set_defaults(func=cmd_instance)

    p = sub.add_parser("simulate", help="run one controller on one instance")
    p.add_argument("--controller", default="dynlqr",
                   choices=["dynlqr", "restart", "oracle", "fixed"])
    p.add_argument("--instance", help="instance JSON file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", help="per-step regret-decomposition audit")
    p.add_argument("--controller", default="oracle", choices=["oracle", "fixed"])
    p.add_argument("--instance", help="instance JSON file")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="run a grid of (controller, T, V_T, seed)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="calibrate the restart-test threshold")
    p.add_argument("--instance", help="instance JSON file")
    p.set_defaults(func=cmd_calibrate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
