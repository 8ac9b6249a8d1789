"""Command line entry point: ``refract SUBCOMMAND --config PATH``.

Exit codes: 0 success, 1 solver failure, 2 configuration error.  The last
line on stdout is always ``status=<ok|solver-failure|config-error> ...``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import barrier, discounted, hjb, shape, simulate
from .config import RunConfig, defaults_help, parse_config
from .diffusion import ScaleSpeedCache
from .errors import ConfigError, RefractError

SUBCOMMANDS = ("check", "solve", "hjb", "simulate", "discounted", "abelian", "sweep")
EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("refract")


class Context:
    def __init__(self, cfg: RunConfig, out: Path, stream):
        self.cfg = cfg
        self.out = out
        self.stream = stream
        self.model, self.reward = cfg.build()
        self.cache = ScaleSpeedCache(self.model, cfg.solver["quad_rel_tol"], cfg.solver["quad_abs_tol"])
        self.digits = cfg.output["precision"]
        self._shape = None
        self._solution = None

    def say(self, text=""):
        print(text, file=self.stream)

    def fmt(self, v):
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.{self.digits}g}"
        return str(v)

    def write_csv(self, name, header, rows):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([self.fmt(v) for v in row])
        self.say(f"wrote {path}")
        return path

    def shape(self):
        if self._shape is None:
            self._shape = shape.check_assumptions(self.reward, self.model, self.cfg.solver["grid_size"], self.cache)
        return self._shape

    def solution(self):
        if self._solution is None:
            s = self.cfg.solver
            opts = barrier.SolverOptions(s["xtol"], s["polish"], s["max_newton"], s["force"])
            self._solution = barrier.solve_barriers(self.cache, self.reward, self.shape(), opts)
        return self._solution


def cmd_check(ctx: Context):
    rep = ctx.shape()
    ctx.say(rep.summary())
    rows = [("xhat1", rep.xhat1), ("xhat2", rep.xhat2), ("b0", np.nan if rep.b0 is None else rep.b0)]
    rows += [(k, int(v)) for k, v in rep.flags.items()]
    ctx.write_csv("check.csv", ["name", "value"], rows)
    return EXIT_OK


def cmd_solve(ctx: Context):
    sol = ctx.solution()
    ctx.say(sol.summary())
    r1, r2 = sol.foc_residuals
    g1, g2 = sol.grad_at_solution
    ctx.write_csv(
        "solve.csv",
        ["a", "b", "lambda", "r1", "r2", "grad_a", "grad_b", "case", "method"],
        [(sol.a, sol.b, sol.lambda_star, r1, r2, g1, g2, sol.case_tag, sol.method)],
    )
    return EXIT_OK


def cmd_hjb(ctx: Context):
    sol = ctx.solution()
    g = ctx.cfg.grid
    grid = hjb.build_hjb(ctx.cache, ctx.reward, sol, hjb.GridSpec(g["hjb_lo"], g["hjb_hi"], g["hjb_points"]))
    rep = hjb.verify_hjb(ctx.cache, ctx.reward, grid)
    ctx.say(rep.summary())
    ctx.write_csv("hjb_grid.csv", ["x", "u", "u1", "u2", "residual"], zip(grid.xs, grid.u, grid.u1, grid.u2, rep.residual))
    if not rep.passed:
        raise RefractError("HJB verification failed")
    return EXIT_OK


def _sim_config(ctx: Context):
    s = ctx.cfg.sim
    a, b = s["a"], s["b"]
    if s["one_sided"]:
        if a is None:
            raise ConfigError("sim.a: required for one-sided runs")
        b = None
    elif a is None or b is None:
        sol = ctx.solution()
        a = sol.a if a is None else a
        b = sol.b if b is None else b
    return simulate.SimConfig(
        ctx.model, ctx.reward, a, b, s["x0"], s["dt"], s["horizon_T"], s["burn_in_fraction"],
        s["n_batches"], s["seed"], s["thin_every"],
    )


def cmd_simulate(ctx: Context):
    cfg = _sim_config(ctx)
    n = ctx.cfg.sim["replications"]
    if cfg.b is None:
        ests = [simulate.simulate_one_sided(cfg, exploratory=True)]
        agg = (ests[0].mean_reward_rate, ests[0].std_error, ests[0].rate_La, ests[0].rate_Lb)
    else:
        ests, agg = simulate.simulate_replications(cfg, n)
    rows = [(i, e.mean_reward_rate, e.std_error, e.rate_La, e.rate_Lb) for i, e in enumerate(ests)]
    rows.append(("all",) + agg)
    for i, e in enumerate(ests):
        ctx.say(f"replication {i}: mean={e.mean_reward_rate:.8g} se={e.std_error:.3g} "
                f"rate_La={e.rate_La:.6g} rate_Lb={e.rate_Lb:.6g} range=[{e.x_min:.6g}, {e.x_max:.6g}]")
        for note in e.notes:
            ctx.say(f"  note: {note}")
    if cfg.b is not None:
        lam = barrier.lambda_ab(ctx.cache, ctx.reward, barrier.BarrierPair(cfg.a, cfg.b))
        ra, rb = barrier.local_time_rates(ctx.cache, barrier.BarrierPair(cfg.a, cfg.b))
        ctx.say(f"stationary oracle: lambda={lam:.8g} rate_La={ra:.6g} rate_Lb={rb:.6g}")
    ctx.write_csv("sim.csv", ["replication", "mean", "se", "rate_la", "rate_lb"], rows)
    if cfg.thin_every and ests[0].path is not None:
        ctx.write_csv("path.csv", ["t", "x", "La", "Lb"], ests[0].path)
    return EXIT_OK


def cmd_discounted(ctx: Context):
    d = ctx.cfg.discounted
    try:
        hint = ctx.solution().a
    except RefractError:
        hint = None
    rows, failures = [], 0
    for r in d["rs"]:
        try:
            s = discounted.solve_discounted(ctx.cache, ctx.reward, r, hint)
        except RefractError as exc:
            ctx.say(f"r={r}: failed: {exc}")
            rows.append((r, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan))
            failures += 1
            continue
        hint = s.a_r
        line = (f"r={r}: a_r={s.a_r:.10g} b_r={s.b_r:.10g} rV(a_r)-pi2={s.launch_residual:.2e} "
                f"rV(b_r)-pi1={s.shoot_residual:.2e}")
        mc, mc_se = np.nan, np.nan
        if d["mc_paths"]:
            x = 0.5 * (s.a_r + s.b_r)
            est = simulate.simulate_discounted(ctx.model, ctx.reward, s.a_r, s.b_r, r, x, d["mc_dt"],
                                               n_paths=d["mc_paths"], seed=ctx.cfg.sim["seed"])
            mc, mc_se = est.value, est.std_error
            line += f" V(mid)={s.V_at(x):.8g} mc={mc:.8g}+-{mc_se:.2g}"
        ctx.say(line)
        rows.append((r, s.a_r, s.b_r, s.shoot_residual, s.launch_residual, mc, mc_se))
    ctx.write_csv("discounted.csv", ["r", "a_r", "b_r", "shoot_residual", "launch_residual", "mc_value", "mc_se"], rows)
    return EXIT_SOLVER if failures == len(rows) else EXIT_OK


def cmd_abelian(ctx: Context):
    sol = ctx.solution()
    d = ctx.cfg.discounted
    table = discounted.abelian_sweep(ctx.cache, ctx.reward, d["rs"], d["x_eval"], sol)
    ctx.say(f"x_eval={table.x_eval:.10g} lambda*={table.lambda_star:.10g}")
    for row in table.rows:
        if row.error:
            ctx.say(f"r={row.r}: failed: {row.error}")
        else:
            ctx.say(f"r={row.r}: a_r={row.a_r:.8g} b_r={row.b_r:.8g} rV={row.rv:.10g} dev={row.dev_lambda:.3e}")
    ctx.write_csv(
        "abelian.csv",
        ["r", "a_r", "b_r", "rv", "dev_lambda", "dev_a", "dev_b"],
        [(w.r, w.a_r, w.b_r, w.rv, w.dev_lambda, w.dev_a, w.dev_b) for w in table.rows],
    )
    return EXIT_SOLVER if not table.ok_rows() else EXIT_OK


def cmd_sweep(ctx: Context):
    g = ctx.cfg.grid
    lo, hi = g["sweep_lo"], g["sweep_hi"]
    if lo is None or hi is None:
        sol = ctx.solution()
        lo = sol.a / 2 if lo is None else lo
        hi = min(2 * sol.b, ctx.model.domain_cap) if hi is None else hi
    if not 0 < lo < hi:
        raise ConfigError("grid.sweep_hi: must exceed grid.sweep_lo")
    axis = np.linspace(lo, hi, g["sweep_n"])
    res = barrier.sweep(ctx.cache, ctx.reward, axis, axis)
    i, j = np.argwhere(res.lambda_table == np.nanmax(res.lambda_table))[0]
    ctx.say(f"argmax a={res.argmax.a:.8g} b={res.argmax.b:.8g} lambda={res.lambda_table[i, j]:.10g}")
    ctx.write_csv("sweep.csv", ["a", "b", "lambda"], res.rows())
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "hjb": cmd_hjb,
    "simulate": cmd_simulate,
    "discounted": cmd_discounted,
    "abelian": cmd_abelian,
    "sweep": cmd_sweep,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="refract",
        description="Optimal reflection barriers, HJB certificates and Monte Carlo checks for 1-D diffusions.",
        epilog=defaults_help() + "\n\nenvironment: REFRACT_LOG=DEBUG|INFO|WARNING sets log verbosity",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, metavar="N", help="root seed (overrides sim.seed)")
    p.add_argument("--force", action="store_true", help="solve even when structural checks fail")
    return p


def run(subcommand, cfg: RunConfig, stream=None):
    """Execute one subcommand; returns the exit code and prints the status line."""
    stream = stream or sys.stdout

    def status(code, kind, msg=""):
        detail = f" message={msg!r}" if msg else ""
        print(f"status={kind} exit={code} command={subcommand}{detail}", file=stream)
        return code

    try:
        ctx = Context(cfg, Path(cfg.output["directory"]), stream)
        code = COMMANDS[subcommand](ctx)
    except ConfigError as exc:
        return status(EXIT_CONFIG, "config-error", str(exc))
    except (RefractError, ArithmeticError) as exc:
        return status(EXIT_SOLVER, "solver-failure", f"{type(exc).__name__}: {exc}")
    return status(code, "ok" if code == EXIT_OK else "solver-failure")


def main(argv=None):
    logging.basicConfig(level=os.environ.get("REFRACT_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.out is not None:
            cfg.output["directory"] = args.out
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: must be a 64-bit unsigned integer")
            cfg.sim["seed"] = args.seed
        if args.force:
            cfg.solver["force"] = True
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"status=config-error exit={EXIT_CONFIG} command={args.subcommand} message={str(exc)!r}")
        return EXIT_CONFIG
    print("# config")
    for line in cfg.echo().splitlines():
        print(f"# {line}" if line else "#")
    return run(args.subcommand, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
