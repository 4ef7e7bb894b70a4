"""Command-line front end.

Subcommands: ``synth``, ``sweep-n``, ``theta-star``, ``trajectories`` and
``replay``.  Exit codes: 0 ok, 2 configuration error, 3 theta above the
critical value, 4 numerical failure.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, load_config, parse_config, preset, render_config
from .errors import (EstimatorOverflow, IllConditioned, LeqgError, ModelAssumptionViolated,
                     NumericalBlowup, SpecError, ThetaAboveCritical)
from .kron import assemble
from .simulator import SimConfig, mc_cost, simulate
from .synthesis import (InitialCondition, default_initial_condition, full_info_synthesis,
                        output_feedback_synthesis, theta_star_full, theta_star_output)

log = logging.getLogger("leqgpursuit")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABOVE_CRITICAL = 3
EXIT_NUMERICAL = 4

SWEEP_COLUMNS = ["n", "theta", "epsilon", "mode", "analytic_cost", "mc_cost", "mc_stderr", "status"]
THETA_STAR_COLUMNS = ["n", "theta_star", "theta_I_star"]
TRAJECTORY_COLUMNS = ["t", "agent", "dim", "x", "u"]
TRAJECTORY_MODES = ("risk_averse", "risk_neutral", "risk_seeking")


@dataclass
class SweepRow:
    n: int
    theta: float
    epsilon: float
    mode: str
    analytic_cost: Optional[float]
    mc_cost: Optional[float] = None
    mc_stderr: Optional[float] = None
    status: str = "ok"
    theta_star: Optional[float] = None
    message: str = ""

    def sort_key(self):
        return (self.n, self.theta, self.epsilon, self.mode)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _json_text(meta, rows):
    return json.dumps({"meta": meta, "rows": rows}, indent=2, sort_keys=False) + "\n"


class RunContext:
    """Output directory, metadata and the manifest of one CLI invocation."""

    def __init__(self, command, cfg, args_record):
        self.command = command
        self.cfg = cfg
        self.outdir = cfg.output.dir
        self.format = cfg.output.format
        self.hash = config_hash(cfg)
        self.args_record = args_record
        self.files = {}
        os.makedirs(self.outdir, exist_ok=True)

    @property
    def meta(self):
        return {"command": self.command, "version": __version__, "config_hash": self.hash}

    def write(self, name, text):
        path = os.path.join(self.outdir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def write_table(self, stem, columns, rows, fmt=None):
        fmt = fmt or self.format
        if fmt == "csv":
            return self.write(f"{stem}.csv", _csv_text(columns, rows))
        return self.write(f"{stem}.json", _json_text(self.meta, [{c: r[c] for c in columns} | {
            k: v for k, v in r.items() if k not in columns and v is not None} for r in rows]))

    def finish(self, extra=None):
        manifest = dict(self.meta)
        manifest["args"] = self.args_record
        manifest["config"] = render_config(self.cfg)
        manifest["outputs"] = dict(sorted(self.files.items()))
        if extra:
            manifest.update(extra)
        text = json.dumps(manifest, indent=2) + "\n"
        path = os.path.join(self.outdir, f"manifest_{self.command}.json")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return path


def _controller(sys_, theta, measurement):
    if measurement == "perfect":
        return full_info_synthesis(sys_, theta)
    return output_feedback_synthesis(sys_, theta)


def _theta_star(sys_, measurement, tol=1e-6):
    if measurement == "perfect":
        return theta_star_full(sys_, tol)
    return theta_star_output(sys_, tol)


def _sim_config(cfg, **overrides):
    values = asdict(cfg.sim)
    values.update(overrides)
    return SimConfig(**values)


# ---------------------------------------------------------------- commands

def cmd_synth(cfg, n, theta, measurement, ctx):
    sys_ = assemble(cfg.spec(), n)
    try:
        ctrl = _controller(sys_, theta, measurement)
    except ThetaAboveCritical as exc:
        try:
            star = _theta_star(sys_, measurement)
        except LeqgError:
            star = None
        raise ThetaAboveCritical(theta, n, theta_star=star) from exc
    doc = {"meta": ctx.meta, "n": n, "theta": theta, "epsilon": sys_.epsilon, "measurement": measurement,
           "cost_per_agent": ctrl.cost_per_agent,
           "X": ctrl.X_n.X.tolist(),
           "X_diagnostics": _diagnostics(ctrl.X_n)}
    if measurement == "perfect":
        doc["K"] = ctrl.K.tolist()
    else:
        doc.update({"Y": ctrl.Y_n.X.tolist(), "Y_diagnostics": _diagnostics(ctrl.Y_n),
                    "gain": ctrl.gain.tolist(), "M_inv": ctrl.M_inv.tolist(),
                    "filter_A": ctrl.filter_A.tolist(), "filter_B": ctrl.filter_B.tolist(),
                    "filter_L": ctrl.filter_L.tolist()})
    ctx.write("synth.json", json.dumps(doc, indent=2) + "\n")
    return doc


def _diagnostics(sol):
    return {"residual_norm": sol.residual_norm, "min_eigenvalue": sol.min_eigenvalue,
            "closed_loop_spectral_abscissa": sol.closed_loop_spectral_abscissa}


def _sweep_row(cfg, n, theta, eps, mode):
    spec = cfg.spec().with_epsilon(eps)
    sys_ = assemble(spec, n)
    row = SweepRow(n=n, theta=theta, epsilon=eps, mode=mode, analytic_cost=None)
    try:
        ctrl = _controller(sys_, theta, mode)
        row.analytic_cost = ctrl.cost_per_agent
        if cfg.sweep.mc:
            report = mc_cost(sys_, ctrl, theta, _sim_config(cfg))
            row.mc_cost, row.mc_stderr = report.mc_estimate, report.std_error
    except ThetaAboveCritical as exc:
        row.status, row.message = "above_critical", str(exc)
    except LeqgError as exc:
        row.status, row.message = "error", f"{type(exc).__name__}: {exc}"
    if cfg.sweep.theta_star and row.status != "error":
        try:
            row.theta_star = _theta_star(sys_, mode)
        except LeqgError:
            pass
    return row


def cmd_sweep_n(cfg, ctx=None):
    """One row per ``(n, theta, epsilon, mode)``; rows come back sorted."""
    tasks = [(n, th, eps, mode) for n in cfg.sweep.n for th in cfg.sweep.theta
             for eps in cfg.sweep.epsilon for mode in cfg.sweep.modes]
    with ThreadPoolExecutor(max_workers=cfg.sweep.jobs) as pool:
        rows = list(pool.map(lambda t: _sweep_row(cfg, *t), tasks))
    rows.sort(key=SweepRow.sort_key)
    if ctx is not None:
        ctx.write_table("sweep_n", SWEEP_COLUMNS, [_row_dict(r) for r in rows])
    return rows


def _row_dict(row):
    out = asdict(row)
    out.pop("message")
    return out


def cmd_theta_star(cfg, ctx=None, tol=1e-6):
    spec = cfg.spec()
    rows = []
    for n in cfg.sweep.n:
        sys_ = assemble(spec, n)
        row = {"n": n, "theta_star": None, "theta_I_star": None}
        for key, mode in (("theta_star", "perfect"), ("theta_I_star", "imperfect")):
            try:
                row[key] = _theta_star(sys_, mode, tol)
            except (ModelAssumptionViolated, IllConditioned) as exc:
                log.warning("n=%d %s: %s", n, key, exc)
        rows.append(row)
    if ctx is not None:
        ctx.write_table("theta_star", THETA_STAR_COLUMNS, rows)
    return rows


def _trajectory_theta(cfg, sys_, mode):
    tc = cfg.trajectories
    if tc.theta_abs is not None:
        bar = tc.theta_abs
    else:
        bar = 0.8 * _theta_star(sys_, tc.measurement)
    return {"risk_averse": bar, "risk_neutral": 0.0, "risk_seeking": -bar}[mode]


def trajectory_rows(traj, n, d, m):
    rows = []
    for k, t in enumerate(traj.times):
        for i in range(n):
            for j in range(d):
                rows.append({"t": float(t), "agent": i, "dim": j, "x": float(traj.x[k, i * d + j]),
                             "u": float(traj.u[k, i * m + j]) if j < m else None})
    return rows


def cmd_trajectories(cfg, mode, ctx=None):
    tc = cfg.trajectories
    spec = cfg.spec()
    sys_ = assemble(spec, tc.n)
    theta = _trajectory_theta(cfg, sys_, mode)
    ctrl = _controller(sys_, theta, tc.measurement)
    sim = _sim_config(cfg, trials=1, evader_mode=tc.evader_mode)
    if tc.x0_mean is not None:
        if len(tc.x0_mean) != sys_.state_dim:
            raise ConfigError("trajectories.x0_mean", f"expected {sys_.state_dim} entries")
        mean = np.array(tc.x0_mean)
    else:
        mean = default_initial_condition(sys_).x_bar_0
    if tc.x0_cov == 0:
        traj = simulate(sys_, ctrl, sim, x0=mean, record_every=tc.record_every)
    else:
        ic = InitialCondition(mean, tc.x0_cov * np.eye(sys_.state_dim))
        traj = simulate(sys_, ctrl, sim, ic=ic, record_every=tc.record_every)
    rows = trajectory_rows(traj, tc.n, spec.d, spec.m)
    run = {"mode": mode, "theta": theta, "seed": sim.seed, "n": tc.n, "measurement": tc.measurement}
    if ctx is not None:
        ctx.write_table(f"trajectory_{mode}", TRAJECTORY_COLUMNS, rows)
        ctx.write(f"run_{mode}.json", json.dumps(dict(ctx.meta, **run), indent=2) + "\n")
    return traj, run


# ---------------------------------------------------------------- argparse

def _add_common(p):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--preset", choices=["basic"], help="built-in system (default: basic)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--format", choices=["csv", "json"], help="table format (overrides output.format)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides sim.seed)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="leqg-pursuit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize one controller and dump it as JSON")
    _add_common(p)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--measurement", choices=["perfect", "imperfect"], default="perfect")
    p.add_argument("--epsilon", type=float, help="pursuer noise level (overrides system.epsilon)")

    p = sub.add_parser("sweep-n", help="cost per agent over n, theta, epsilon and measurement mode")
    _add_common(p)
    p.add_argument("--jobs", type=int, help="worker threads (overrides sweep.jobs)")

    p = sub.add_parser("theta-star", help="critical risk parameters over n")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("trajectories", help="closed-loop trajectories for the three risk attitudes")
    _add_common(p)
    p.add_argument("--mode", choices=list(TRAJECTORY_MODES) + ["all"], default="all")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the recorded one)")
    return parser


def _resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "basic")
    if args.out:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    if args.format:
        cfg = replace(cfg, output=replace(cfg.output, format=args.format))
    if args.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
    return cfg


def _run(command, cfg, opts):
    ctx = RunContext(command, cfg, opts)
    if command == "synth":
        doc = cmd_synth(cfg, opts["n"], opts["theta"], opts["measurement"], ctx)
        print(f"n={doc['n']} theta={doc['theta']:g} cost_per_agent={doc['cost_per_agent']:.10g}")
    elif command == "sweep-n":
        rows = cmd_sweep_n(cfg, ctx)
        for r in rows:
            cost = "inf" if r.analytic_cost is None else f"{r.analytic_cost:.6g}"
            print(f"n={r.n} theta={r.theta:g} eps={r.epsilon:g} {r.mode}: {cost} [{r.status}]")
    elif command == "theta-star":
        for r in cmd_theta_star(cfg, ctx, opts["tol"]):
            print(f"n={r['n']} theta_star={_fmt(r['theta_star'])} theta_I_star={_fmt(r['theta_I_star'])}")
    elif command == "trajectories":
        modes = TRAJECTORY_MODES if opts["mode"] == "all" else (opts["mode"],)
        for mode in modes:
            _, run = cmd_trajectories(cfg, mode, ctx)
            print(f"{mode}: theta={run['theta']:.6g}")
    ctx.finish()
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "replay":
            with open(args.manifest, encoding="utf-8") as fh:
                manifest = json.load(fh)
            cfg = parse_config(manifest["config"])
            if args.out:
                cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
            return _run(manifest["command"], cfg, manifest["args"])
        cfg = _resolve_config(args)
        opts = {k: v for k, v in vars(args).items()
                if k in ("n", "theta", "measurement", "tol", "mode")}
        if getattr(args, "epsilon", None) is not None:
            cfg = replace(cfg, system=replace(cfg.system, epsilon=args.epsilon))
            cfg.spec()
        if args.command == "sweep-n" and args.jobs:
            cfg = replace(cfg, sweep=replace(cfg.sweep, jobs=args.jobs))
        return _run(args.command, cfg, opts)
    except (ConfigError, SpecError, ModelAssumptionViolated, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ThetaAboveCritical as exc:
        print(f"above critical: {exc}", file=sys.stderr)
        return EXIT_ABOVE_CRITICAL
    except (IllConditioned, NumericalBlowup, EstimatorOverflow, LeqgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
