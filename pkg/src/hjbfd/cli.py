"""Batch command line interface.

Subcommands:

    solve      march one problem and dump the final slice + trajectory
    rates      space-time refinement study against a fine-grid reference
    switching  switching-cost decay study (one-sided, fixed grid)
    split      operator-splitting macro-step study
    pcc        piecewise-constant-control macro-step study
    decompose  direction decomposition of a symmetric matrix
    probe      structural checks: monotonicity, comparison, a-priori bounds

Exit codes: 0 success, 1 bad configuration, 2 numerical failure (CFL
violation, divergence, rate below its floor), 3 probe failure.  Errors
print exactly one line on stderr of the form "error: <kind>: <reason>".

Outputs are deterministic: identical configs and seeds give byte-identical
CSV files and gnuplot scripts (floats via repr, no timestamps).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .config import (load_json, parse_matrix, parse_pcc, parse_problem,
                     parse_split, parse_switching)
from .errors import ConfigError, HJBError, NumericalError, ProbeFailure
from .grid import SpaceTimeGrid
from .harness import (ReferenceSolution, compare_bounds, run_refinement,
                      write_rate_csv)
from .scheme import ThetaScheme
from .semigroup import (PCControlProblem, SplitProblem, pcc_rate_experiment,
                        splitting_rate_experiment)
from .stencil import bz_decompose
from .switching import SwitchingProblem, k_rate_experiment, switching_solve

__all__ = ["main"]


def _fmt(x) -> str:
    return repr(float(x))


def _floats(text: str, what: str) -> list:
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{what}: empty list")
    return vals


def _ints(text: str, what: str) -> list:
    vals = _floats(text, what)
    out = []
    for v in vals:
        if v != int(v):
            raise ConfigError(f"{what}: expected integers, got {text!r}")
        out.append(int(v))
    return out


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _grid_for(problem, n_x: int, dt, cfl_factor: float) -> SpaceTimeGrid:
    dx = problem.period / n_x
    dt_target = float(dt) if dt is not None else cfl_factor * dx * dx
    return SpaceTimeGrid.build(problem.dim, problem.period, n_x, problem.T, dt_target)


def _write_trajectory(result, path) -> None:
    g = result.grid
    coords = g.nodes().reshape(-1, g.dim)
    header = "t," + ",".join(f"x_{i + 1}" for i in range(g.dim)) + ",value"
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for n, t in enumerate(g.times()):
            flat = result.values(n).reshape(-1)
            for row, val in zip(coords, flat):
                cells = [_fmt(t)] + [_fmt(c) for c in row] + [_fmt(val)]
                fh.write(",".join(cells) + "\n")


def _write_solution_plot(csv_path, dim: int) -> None:
    if dim > 2:
        return
    gp_path = str(csv_path)[:-4] + ".gp"
    name = str(csv_path).rsplit("/", 1)[-1]
    lines = ['set datafile separator ","', "set key autotitle columnhead"]
    if dim == 1:
        lines.append(f'plot "{name}" using 1:2 with linespoints')
    else:
        lines.append(f'splot "{name}" using 1:2:3 with points')
    lines.append("pause -1")
    with open(gp_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_solve(args) -> int:
    problem = parse_problem(load_json(args.config))
    grid = _grid_for(problem, args.nx, args.dt, args.cfl_factor)
    scheme = ThetaScheme(problem, grid, theta=args.theta, builder=args.builder)
    result = scheme.solve(force=args.force)
    out = _outdir(args)
    sol_path = os.path.join(out, "solution.csv")
    result.final.to_csv(sol_path)
    _write_solution_plot(sol_path, grid.dim)
    _write_trajectory(result, os.path.join(out, "trajectory.csv"))
    iters = max((r.policy_iterations for r in result.reports), default=0)
    print(f"solve ok: label={problem.label} n_x={grid.n_x} n_t={grid.n_t} "
          f"dt={_fmt(grid.dt)} theta={_fmt(args.theta)} "
          f"sup|u(T)|={_fmt(np.max(np.abs(result.final.values)))} "
          f"max_policy_iters={iters}")
    return 0


def cmd_rates(args) -> int:
    problem = parse_problem(load_json(args.config))
    levels = sorted(_ints(args.levels, "--levels"))
    if len(levels) < 2:
        raise ConfigError("--levels needs at least two grid sizes")
    ref_nx = args.ref_nx if args.ref_nx is not None else 2 * max(levels)
    for nx in levels:
        if ref_nx % nx != 0 or ((ref_nx // nx) & (ref_nx // nx - 1)):
            raise ConfigError(
                f"reference n_x={ref_nx} must be a power-of-2 multiple of level n_x={nx}")
    ref_grid = _grid_for(problem, ref_nx, None, args.cfl_factor)
    ref_scheme = ThetaScheme(problem, ref_grid, theta=args.theta, builder=args.builder)
    reference = ReferenceSolution("fine", fine=ref_scheme.solve(force=args.force).final)
    dx_levels = [(nx, args.cfl_factor * (problem.period / nx) ** 2) for nx in levels]
    report = run_refinement(problem, {"theta": args.theta, "builder": args.builder},
                            dx_levels, reference, exponent=args.exponent)
    verdict = compare_bounds(report, args.exponent)
    out = _outdir(args)
    write_rate_csv(report, os.path.join(out, "rates.csv"), verdict)
    print(f"rates: slope={_fmt(report.slope)} r2={_fmt(report.r2)} "
          f"floor={_fmt(args.exponent - 0.05)} errors={[_fmt(e) for e in report.err_total]} "
          f"verdict={'pass' if verdict.passed else 'fail'}")
    if not verdict.passed:
        raise NumericalError(f"rate check failed: {verdict.reason}")
    return 0


def cmd_switching(args) -> int:
    problem, modes, k_doc = parse_switching(load_json(args.config))
    if args.k_list is not None:
        k_list = _floats(args.k_list, "--k-list")
    elif k_doc is not None:
        k_list = k_doc
    else:
        k_list = [0.4, 0.2, 0.1, 0.05]
    grid = _grid_for(problem, args.nx, args.dt, args.cfl_factor)
    report = k_rate_experiment(problem, modes, grid, k_list, theta=args.theta,
                               builder=args.builder)
    verdict = compare_bounds(report, report.exponent)
    out = _outdir(args)
    write_rate_csv(report, os.path.join(out, "switching.csv"), verdict)

    sp = SwitchingProblem(base=problem, mode_controls=modes, k=min(k_list), grid=grid,
                          theta=args.theta, builder=args.builder)
    sol = switching_solve(sp, force=args.force)
    band = sol.coupling_band_violation()
    scale = 1.0 + max(float(np.max(np.abs(v))) for v in sol.final_values())
    one_sided = max(report.err_minus)
    print(f"switching: slope={_fmt(report.slope)} floor={_fmt(report.exponent - 0.05)} "
          f"one_sided_violation={_fmt(one_sided)} band_violation={_fmt(band)} "
          f"verdict={'pass' if verdict.passed else 'fail'}")
    if one_sided > 1e-6 * scale:
        raise NumericalError(f"one-sided bound violated: {one_sided!r} > 1e-6*{scale!r}")
    if band > 1e-9 * scale:
        raise NumericalError(f"coupling band exceeded: violation {band!r}")
    if not verdict.passed:
        raise NumericalError(f"switching rate check failed: {verdict.reason}")
    return 0


def _dt_levels(args, doc_list, default) -> list:
    if args.dt_list is not None:
        return _floats(args.dt_list, "--dt-list")
    if doc_list is not None:
        return doc_list
    return list(default)


def cmd_split(args) -> int:
    dim, period, T, fam1, fam2, u0, doc_dts = parse_split(load_json(args.config))
    dts = _dt_levels(args, doc_dts, (0.1, 0.05, 0.025, 0.0125))
    sp = SplitProblem(dim=dim, period=period, T=T, family1=fam1, family2=fam2,
                      u0=u0, n_x=args.nx, builder=args.builder)
    report = splitting_rate_experiment(sp, dts, m=args.inner, exponent=args.exponent)
    verdict = compare_bounds(report, report.exponent)
    out = _outdir(args)
    write_rate_csv(report, os.path.join(out, "split.csv"), verdict)
    print(f"split: slope={_fmt(report.slope)} floor={_fmt(report.exponent - 0.05)} "
          f"errors={[_fmt(e) for e in report.err_total]} "
          f"verdict={'pass' if verdict.passed else 'fail'} notes={report.notes!r}")
    if not verdict.passed:
        raise NumericalError(f"splitting rate check failed: {verdict.reason}")
    return 0


def cmd_pcc(args) -> int:
    dim, period, T, modes, u0, doc_dts = parse_pcc(load_json(args.config))
    dts = _dt_levels(args, doc_dts, (0.1, 0.05, 0.025, 0.0125))
    pp = PCControlProblem(dim=dim, period=period, T=T, modes=modes, u0=u0,
                          n_x=args.nx, builder=args.builder)
    report = pcc_rate_experiment(pp, dts, min_inner=args.min_inner,
                                 exponent=args.exponent)
    verdict = compare_bounds(report, report.exponent)
    out = _outdir(args)
    write_rate_csv(report, os.path.join(out, "pcc.csv"), verdict)
    scale = 1.0 + float(np.max(np.abs(pp.initial_values())))
    one_sided = max(report.err_plus)
    print(f"pcc: slope={_fmt(report.slope)} floor={_fmt(report.exponent - 0.05)} "
          f"one_sided_violation={_fmt(one_sided)} "
          f"verdict={'pass' if verdict.passed else 'fail'}")
    if one_sided > 1e-6 * scale:
        raise NumericalError(f"one-sided bound violated: {one_sided!r} > 1e-6*{scale!r}")
    if not verdict.passed:
        raise NumericalError(f"pcc rate check failed: {verdict.reason}")
    return 0


def cmd_decompose(args) -> int:
    a, max_order = parse_matrix(load_json(args.config))
    dec = bz_decompose(a, max_order=max_order)
    out = _outdir(args)
    path = os.path.join(out, "decomposition.csv")
    with open(path, "w", newline="") as fh:
        fh.write("direction,weight\n")
        for beta, w in zip(dec.directions, dec.weights):
            fh.write(f"\"{' '.join(str(int(x)) for x in beta)}\",{_fmt(w)}\n")
    scale = max(1.0, float(np.max(np.abs(a))))
    resid = dec.residual_norm
    print(f"decompose: directions={len(dec.weights)} residual={_fmt(resid)} "
          f"max_order={max_order}")
    if resid > 1e-12 * scale:
        raise NumericalError(
            f"matrix not decomposable over stencil order {max_order}: residual {resid!r}")
    return 0


def _shifted_problem(problem, shift: float):
    def u0(X, _p=problem, _s=shift):
        return _p.u0_values(np.asarray(X, dtype=float)) + _s

    return dataclasses.replace(problem, u0=u0)


def cmd_probe(args) -> int:
    problem = parse_problem(load_json(args.config))
    grid = _grid_for(problem, args.nx, args.dt, args.cfl_factor)
    scheme = ThetaScheme(problem, grid, theta=args.theta, builder=args.builder)

    mono = scheme.monotonicity_probe(trials=args.trials, seed=args.seed)
    print(f"probe monotonicity: {'pass' if mono.passed else 'FAIL'} "
          f"worst={_fmt(mono.worst)} checked={mono.checked}")
    if not mono.passed:
        raise ProbeFailure(f"monotonicity: worst violation {mono.worst!r} ({mono.witness})",
                           witness=mono.witness)

    u_result = scheme.solve(force=args.force)
    forced = ThetaScheme(problem, grid, theta=args.theta, builder=args.builder, forcing=1.0)
    v_result = forced.solve(force=args.force)
    checks = [
        ("comparison forced", scheme.comparison_bound_check(u_result, v_result, 0.0, 1.0)),
        ("comparison forced reverse",
         forced.comparison_bound_check(v_result, u_result, 1.0, 0.0)),
    ]
    shifted = ThetaScheme(_shifted_problem(problem, -0.3), grid, theta=args.theta,
                          builder=args.builder)
    w_result = shifted.solve(force=args.force)
    checks.append(("comparison shifted",
                   scheme.comparison_bound_check(u_result, w_result, 0.0, 0.0)))
    checks.append(("a-priori bound", scheme.apriori_bounds_check(u_result)))
    for name, res in checks:
        print(f"probe {name}: {'pass' if res.passed else 'FAIL'} "
              f"worst={_fmt(res.worst)} checked={res.checked}")
        if not res.passed:
            raise ProbeFailure(f"{name}: worst excess {res.worst!r} ({res.witness})",
                               witness=res.witness)
    return 0


def _common(p, nx_default: int, theta_default: float) -> None:
    p.add_argument("config", help="JSON problem description")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    p.add_argument("--force", action="store_true",
                   help="run even when a step-size check fails")
    p.add_argument("--builder", choices=("kushner", "bz"), default="kushner",
                   help="stencil construction (default: kushner)")
    p.add_argument("--theta", type=float, default=theta_default,
                   help=f"time-stepping weight in [0,1] (default: {theta_default})")
    p.add_argument("--nx", type=int, default=nx_default,
                   help=f"spatial points per axis (default: {nx_default})")
    p.add_argument("--dt", type=float, default=None,
                   help="target time step (default: cfl-factor * dx^2)")
    p.add_argument("--cfl-factor", dest="cfl_factor", type=float, default=0.45,
                   help="dt = factor * dx^2 when --dt is absent (default: 0.45)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hjbfd",
        description="Monotone finite-difference solvers and rate studies for "
                    "parabolic Bellman equations on the torus.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem and dump CSV output")
    _common(p, 64, 1.0)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("rates", help="refinement study against a fine-grid reference")
    _common(p, 64, 0.0)
    p.add_argument("--levels", default="16,32,64",
                   help="comma-separated n_x levels (default: 16,32,64)")
    p.add_argument("--ref-nx", dest="ref_nx", type=int, default=None,
                   help="reference n_x (default: 2 * max level)")
    p.add_argument("--exponent", type=float, default=0.2,
                   help="rate exponent lower bound (default: 0.2)")
    p.set_defaults(fn=cmd_rates)

    p = sub.add_parser("switching", help="switching-cost decay study")
    _common(p, 64, 0.0)
    p.add_argument("--k-list", dest="k_list", default=None,
                   help="comma-separated switching costs (default: 0.4,0.2,0.1,0.05)")
    p.set_defaults(fn=cmd_switching)

    p = sub.add_parser("split", help="operator-splitting macro-step study")
    _common(p, 48, 1.0)
    p.add_argument("--dt-list", dest="dt_list", default=None,
                   help="comma-separated macro steps (default: 0.1,0.05,0.025,0.0125)")
    p.add_argument("--inner", type=int, default=None,
                   help="inner substeps per macro step (default: calibrated)")
    p.add_argument("--exponent", type=float, default=1.0 / 13.0,
                   help="rate exponent lower bound (default: 1/13)")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("pcc", help="piecewise-constant-control macro-step study")
    _common(p, 48, 1.0)
    p.add_argument("--dt-list", dest="dt_list", default=None,
                   help="comma-separated macro steps (default: 0.1,0.05,0.025,0.0125)")
    p.add_argument("--min-inner", dest="min_inner", type=int, default=16,
                   help="inner steps at the finest level (default: 16)")
    p.add_argument("--exponent", type=float, default=0.1,
                   help="rate exponent lower bound (default: 1/10)")
    p.set_defaults(fn=cmd_pcc)

    p = sub.add_parser("decompose", help="direction decomposition of a symmetric matrix")
    p.add_argument("config", help="JSON file with 'matrix' and optional 'max_order'")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("probe", help="monotonicity, comparison and bound checks")
    _common(p, 32, 1.0)
    p.add_argument("--trials", type=int, default=100,
                   help="random pairs for the monotonicity probe (default: 100)")
    p.set_defaults(fn=cmd_probe)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2
    except ProbeFailure as exc:
        print(f"error: probe: {exc}", file=sys.stderr)
        return 3
    except HJBError as exc:  # pragma: no cover - safety net
        print(f"error: internal: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
