"""Command line entry point.

    subdiff run <config> [--force] [--out DIR]
    subdiff reproduce <suite>
    subdiff ml <beta0> <beta...> --z <z...>
    subdiff fode <config> [--out DIR]
    subdiff validate <config>

Exit codes: 0 success, 1 parse/I-O error, unknown suite or failed suite check, 2 hypotheses
fail without --force, 3 solver failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, DomainError, HypothesisError, SolverError

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_SOLVER = 0, 1, 2, 3


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(e) for e in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_fmt(e)}" for k, e in v.items()) + "}"
    return str(v)


def _envelope(cfg, problem, report):
    """decay function of the constant-coefficient envelope, or None when it does not apply."""
    from .frac_calculus import ZeroKernel
    from .fode import decay_g

    if not isinstance(problem.kernel, ZeroKernel):
        return None
    if not (problem.rho.time_constant and all(c.time_constant for c in problem.rho_i)):
        return None
    if any(float(c.at(0.0)) <= 0 for c in problem.rho_i) or report["C4"] <= 0:
        return None
    t = cfg.mesh.nodes
    g = np.empty(t.size)
    g[0] = 2.0
    g[1:] = decay_g(t[1:], problem.orders, float(problem.rho.at(0.0)),
                    tuple(float(c.at(0.0)) for c in problem.rho_i), report["C4"])
    return g


def _write_svg(path: Path, t, series, envelope) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "subdiff"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    tp = t[1:]
    for label, V in series:
        ax.loglog(tp, np.maximum(V[1:], 1e-300), label=label)
    if envelope is not None:
        for label, V0, g in envelope:
            ax.loglog(tp, V0 * g[1:] ** 2, linestyle="--", linewidth=0.8, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("V(t)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_run(args) -> int:
    from .analysis import monitor_energy_inequality, validate_hypotheses
    from .config import load_experiment
    from .pde import run

    cfg = load_experiment(args.config)
    out = Path(args.out)
    tol = cfg.tolerances
    reports = [validate_hypotheses(p, horizon=cfg.mesh.T, delta_star=tol["delta_star"]) for p in cfg.problems]
    if not args.force and not reports[0].ok:
        sys.stderr.write("hypotheses fail: " + ", ".join(reports[0].failures()) + "\n")
        for k in reports[0].failures():
            sys.stderr.write(f"  {k}: {reports[0].notes.get(k, 'violated')}\n")
        sys.stdout.write(reports[0].to_text())
        return EXIT_HYPOTHESIS
    trajs = [run(p, cfg.grid, cfg.mesh, force=True) for p in cfg.problems]
    out.mkdir(parents=True, exist_ok=True)
    t = cfg.mesh.nodes
    with open(out / "trajectory.csv", "w") as fh:
        fh.write("ic,t,V,sup_norm,mem_norm,newton_iters\n")
        for i, tr in enumerate(trajs):
            for row in zip(t, tr.V, tr.sup_norm, tr.mem_norm, tr.newton_iters):
                fh.write(f"{i}," + ",".join(f"{v:.17g}" for v in row[:4]) + f",{int(row[4])}\n")
    monitors = [monitor_energy_inequality(tr, rep, p, tol["monitor_rel_tol"], tol["monitor_fraction"])
                for tr, rep, p in zip(trajs, reports, cfg.problems)]
    envs = [_envelope(cfg, p, rep) for p, rep in zip(cfg.problems, reports)]
    with open(out / "energy.csv", "w") as fh:
        fh.write("ic,t,V,F,lhs,margin,g\n")
        for i, (tr, mon, g) in enumerate(zip(trajs, monitors, envs)):
            for n in range(t.size):
                gv = g[n] if g is not None else math.nan
                fh.write(f"{i},{t[n]:.17g},{tr.V[n]:.17g},{mon.F[n]:.17g},{mon.lhs[n]:.17g},"
                         f"{mon.margin[n]:.17g},{gv:.17g}\n")
    lines = [f"# subdiff {__version__} run report", f"config = {cfg.path}", "", "[config]"]
    lines += [f"{k} = {_fmt(v)}" for k, v in cfg.echo()]
    lines += ["", "[defaults applied]"]
    lines += [f"tolerances.{k} = {_fmt(v)}" for k, v in cfg.tolerances.items()]
    lines += [f"outputs.{k} = {_fmt(v)}" for k, v in cfg.outputs.items()]
    lines += ["", "[hypotheses]", reports[0].to_text().rstrip()]
    for i, (tr, mon) in enumerate(zip(trajs, monitors)):
        lines += ["", f"[run {i}]",
                  f"V0 = {tr.V[0]:.17g}", f"sup_V = {np.max(tr.V):.17g}", f"V_final = {tr.V[-1]:.17g}",
                  f"sup_norm_max = {np.max(tr.sup_norm):.17g}", f"mem_norm_max = {np.max(tr.mem_norm):.17g}",
                  f"newton_iters_max = {int(np.max(tr.newton_iters))}",
                  f"monitor_fraction_ok = {mon.fraction_ok:.17g}", f"monitor_min_margin = {mon.min_margin:.17g}",
                  f"monitor_ok = {mon.ok}"]
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    if cfg.outputs.get("svg", True):
        series = [(f"ic {i}", tr.V) for i, tr in enumerate(trajs)]
        env = None
        if all(g is not None for g in envs):
            env = [(f"V0 g(t)^2, ic {i}", tr.V[0], g) for i, (tr, g) in enumerate(zip(trajs, envs))]
        _write_svg(out / "decay.svg", t, series, env)
    print(f"wrote {out}/trajectory.csv, energy.csv, report.txt" + (", decay.svg" if cfg.outputs.get("svg", True) else ""))
    return EXIT_OK


def cmd_validate(args) -> int:
    from .analysis import validate_hypotheses
    from .config import load_experiment

    cfg = load_experiment(args.config)
    rep = validate_hypotheses(cfg.problem, horizon=cfg.mesh.T, delta_star=cfg.tolerances["delta_star"])
    sys.stdout.write(rep.to_text())
    return EXIT_OK if rep.ok else EXIT_HYPOTHESIS


def cmd_reproduce(args) -> int:
    from .suites import SUITES, run_suite

    if args.suite not in SUITES:
        sys.stderr.write(f"unknown suite {args.suite!r}; known: {', '.join(SUITES)}\n")
        return EXIT_INPUT
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print(f"{args.suite}: {'all pass' if ok else 'FAILURES'} ({sum(c.passed for c in checks)}/{len(checks)})")
    return EXIT_OK if ok else EXIT_INPUT


def cmd_ml(args) -> int:
    from .special_fn import MLParams, ml_multinomial

    if len(args.beta) != len(args.z):
        sys.stderr.write(f"need one z per beta ({len(args.beta)} betas, {len(args.z)} arguments)\n")
        return EXIT_INPUT
    p = MLParams(tuple(args.beta), args.beta0, tuple(0.0 for _ in args.beta))
    print(f"{ml_multinomial(p, tuple(args.z)):.17g}")
    return EXIT_OK


def cmd_fode(args) -> int:
    from .config import load_fode
    from .fode import solve_const_multiterm, step_fode_numeric

    cfg = load_fode(args.config)
    num = step_fode_numeric(cfg.spec, cfg.mesh)
    exact = solve_const_multiterm(cfg.spec, cfg.mesh) if cfg.spec.constant_coefficients else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fode.csv", "w") as fh:
        fh.write("t,numeric,analytic\n")
        for n, tn in enumerate(cfg.mesh.nodes):
            a = exact.values[n] if exact is not None else math.nan
            fh.write(f"{tn:.17g},{num.values[n]:.17g},{a:.17g}\n")
    msg = f"wrote {out}/fode.csv"
    if exact is not None:
        gap = np.max(np.abs(num.values - exact.values) / np.maximum(np.abs(exact.values), 1e-300))
        msg += f"; max relative gap {gap:.3e}"
    print(msg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subdiff", description="Multi-term subdiffusion experiments.")
    ap.add_argument("--version", action="version", version=f"subdiff {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve the PDE problem(s) of a config and write outputs")
    p.add_argument("config")
    p.add_argument("--force", action="store_true", help="run even when the hypotheses fail")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("reproduce", help="run a reproduction suite")
    p.add_argument("suite")
    p.set_defaults(func=cmd_reproduce)
    p = sub.add_parser("ml", help="evaluate the multinomial Mittag-Leffler function")
    p.add_argument("beta0", type=float)
    p.add_argument("beta", type=float, nargs="+")
    p.add_argument("--z", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_ml)
    p = sub.add_parser("fode", help="solve a scalar multi-term problem")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_fode)
    p = sub.add_parser("validate", help="check the structural hypotheses of a config")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HypothesisError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_HYPOTHESIS
    except (SolverError, ConvergenceError) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except (ConfigError, DomainError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
