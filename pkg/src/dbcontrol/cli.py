"""Command-line runner for single solves and the convergence studies.

Exit codes: 0 success, 1 configuration or validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import audit_uniform_bounds, contraction_factor, estimate_constants
from .control import ContractionWarning, optimize
from .fem import ControlPair, control_norm, interpolate, norm
from .harness import output, studies
from .harness.config import ConfigError, StudyConfig, load_config
from .harness.studies import NUMERICAL_ERRORS
from .harness.verify import run_checks
from .solvers import solve_adjoint, solve_state

log = logging.getLogger("dbcontrol")


def _label(alpha):
    return "inf" if alpha is None else f"{alpha:g}"


def _alpha(text):
    return None if text.lower() in ("inf", "none", "dirichlet") else float(text)


def _parser():
    p = argparse.ArgumentParser(prog="dbcontrol", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value study file (defaults if omitted)")
    common.add_argument("--out", type=Path, help="override output.dir")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def single(name, help_):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("--n", type=int, default=None, help="cells per side (default: first level)")
        s.add_argument("--alpha", type=_alpha, default=None, help="Robin coefficient, or inf")
        return s

    s = single("solve", "state and adjoint for constant controls")
    s.add_argument("--g", type=float, default=0.0, help="constant distributed control")
    s.add_argument("--q", type=float, default=0.0, help="constant boundary control")
    s = single("optimize", "discrete optimal control")
    s.add_argument("--method", choices=("fixed_point", "kkt"), default=None)
    sub.add_parser("constants", parents=[common], help="discrete constants per level -> constants.csv")
    sub.add_parser("study-h", parents=[common], help="h-convergence -> study_h.csv")
    sub.add_parser("study-alpha", parents=[common], help="alpha-convergence -> study_alpha.csv")
    sub.add_parser("study-diagonal", parents=[common], help="double limit -> study_diagonal.csv")
    sub.add_parser("cost-gaps", parents=[common], help="cost gaps -> cost_gaps.csv")
    s = sub.add_parser("audit-bounds", parents=[common], help="uniform bounds -> bound_audit.csv")
    s.add_argument("--n", type=int, default=None, help="cells per side (default: first level)")
    sub.add_parser("verify", parents=[common], help="run the quick property suite")
    return p


def _config(args) -> StudyConfig:
    cfg = StudyConfig() if args.config is None else load_config(args.config)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _print_fits(fits):
    for (alpha, col), (fit, note) in sorted(fits.items(), key=lambda kv: (
            math.inf if kv[0][0] is None else kv[0][0], kv[0][1])):
        label = _label(alpha)
        if fit is None:
            print(f"rate alpha={label:>6} {col:<12} n/a ({note})")
            continue
        extra = f"  warning: {note}" if note else ""
        print(f"rate alpha={label:>6} {col:<12} slope={fit.slope:7.4f} r2={fit.r_squared:.5f}{extra}")


def _status(records) -> int:
    failed = [r for r in records if not r.ok]
    for r in failed:
        print(f"case h={r.h:g} alpha={r.alpha} {r.status}", file=sys.stderr)
    return 2 if failed else 0


def cmd_solve(cfg, args):
    n = cfg.levels[0] if args.n is None else args.n
    mesh = studies.mesh_for(cfg, n)
    spec = studies.problem_for(cfg, mesh, args.alpha)
    ctrl = ControlPair(interpolate(mesh, args.g), interpolate(mesh, args.q).trace())
    u = solve_state(mesh, spec, ctrl)
    p = solve_adjoint(mesh, spec, u)
    print(f"n={n} alpha={_label(args.alpha)} |u|_V={norm(u, 'V'):.12g} |p|_V={norm(p, 'V'):.12g} "
          f"|u-z_d|_H={norm(u - spec.z_d, 'H'):.12g}")
    return 0


def cmd_optimize(cfg, args):
    n = cfg.levels[0] if args.n is None else args.n
    mesh = studies.mesh_for(cfg, n)
    spec = studies.problem_for(cfg, mesh, args.alpha)
    method = args.method or cfg.method
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ContractionWarning)
        if method == "kkt":
            opt = optimize(mesh, spec, method="kkt")
        else:
            opt = optimize(mesh, spec, relaxation=studies.relaxation_for(cfg, args.alpha),
                           tol=cfg.tol, max_iter=5000)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"n={n} alpha={_label(args.alpha)} method={method} J={opt.cost:.17g} iters={opt.iterations} "
          f"|c|={control_norm(opt.control):.12g} grad={opt.gradient_residual:.3e}")
    x, y = mesh.vertices.T
    q = np.full(mesh.n_vertices, math.nan)
    q[mesh.gamma2_nodes] = opt.control.q.values
    rows = zip(x, y, opt.control.g.values, q, opt.state.values, opt.adjoint.values)
    path = output.write_table(Path(cfg.output_dir) / "optimum.csv",
                              ("x", "y", "g", "q", "u", "p"), [list(r) for r in rows])
    print(f"wrote {path}")
    return 0


def cmd_constants(cfg, args):
    rows = []
    for n in cfg.levels:
        mesh = studies.mesh_for(cfg, n)
        for alpha in [None] + list(cfg.alphas):
            c = estimate_constants(mesh, cfg.M1, cfg.M2, alpha)
            rho = contraction_factor(mesh, studies.problem_for(cfg, mesh, alpha), tol=1e-8)
            rows.append((n, mesh.h, c, rho))
            print(f"n={n:4d} alpha={'inf' if alpha is None else alpha:>6} lambda={c.lambda_h:.6f} "
                  f"lambda1={c.lambda1_h:.6f} |gamma|={c.gamma_norm_h:.6f} C0={c.C0:.4f} rho={rho:.4f}")
    rows.sort(key=lambda r: (r[1], math.inf if r[2].alpha is None else r[2].alpha))
    print(f"wrote {output.write_constants(cfg.output_dir, rows)}")
    return 0


def cmd_study_h(cfg, args):
    records, fits = studies.study_h(cfg)
    print(f"wrote {output.write_records(cfg.output_dir, 'study_h', records)}")
    _print_fits(fits)
    return _status(records)


def cmd_study_alpha(cfg, args):
    records = studies.study_alpha(cfg)
    for r in records:
        print(f"alpha={r.alpha:<8g} err_control={r.err_control:.6e} err_state={r.err_state:.6e}")
    print(f"wrote {output.write_records(cfg.output_dir, 'study_alpha', records)}")
    return _status(records)


def cmd_study_diagonal(cfg, args):
    records = studies.study_diagonal(cfg)
    for r in records:
        print(f"k={r.extra['k']} n={r.extra['n']} alpha={r.alpha:g} err_control={r.err_control:.6e}")
    print(f"wrote {output.write_records(cfg.output_dir, 'study_diagonal', records)}")
    return _status(records)


def cmd_cost_gaps(cfg, args):
    records, fits = studies.study_cost_gaps(cfg)
    print(f"wrote {output.write_records(cfg.output_dir, 'cost_gaps', records)}")
    _print_fits(fits)
    bad = studies.sign_violations(records)
    for h, alpha, col, val in bad:
        print(f"sign violation h={h:g} alpha={alpha} {col}={val:.3e}", file=sys.stderr)
    return max(_status(records), 2 if bad else 0)


def cmd_audit_bounds(cfg, args):
    n = cfg.levels[0] if args.n is None else args.n
    mesh = studies.mesh_for(cfg, n)
    audit = audit_uniform_bounds(mesh, studies.problem_for(cfg, mesh), alpha_list=cfg.alphas)
    for r in audit.records:
        print(f"{r.name:<4} alpha={r.alpha:<6g} measured={r.measured:.6e} bound={r.bound:.6e} "
              f"{'ok' if r.satisfied else 'VIOLATED'}")
    print(f"wrote {output.write_audit(cfg.output_dir, audit)}")
    return 0 if audit.all_satisfied else 2


def cmd_verify(cfg, args):
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 2


COMMANDS = {
    "solve": cmd_solve, "optimize": cmd_optimize, "constants": cmd_constants,
    "study-h": cmd_study_h, "study-alpha": cmd_study_alpha, "study-diagonal": cmd_study_diagonal,
    "cost-gaps": cmd_cost_gaps, "audit-bounds": cmd_audit_bounds, "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = _parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] not in COMMANDS and not argv[0].startswith("-"):
        parser.print_usage(sys.stderr)
        if argv:
            print(f"dbcontrol: unknown command {argv[0]!r}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports its own errors
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"dbcontrol: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"dbcontrol: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"dbcontrol: invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
