"""Refinement studies, error norms, and log-log order fitting.

Error orientation follows the two-sided rate statements: the signed
error is d = u_ref - u_h, split into err_plus = |d^+|_0 (scheme below
the reference) and err_minus = |d^-|_0 (scheme above); err_total is the
plain sup norm.  The refinement parameter for space-time studies is
h = sqrt(dx^2 + dt).

Reports are written as CSV with a gnuplot companion script; identical
configurations must produce byte-identical files, so all numbers are
formatted with repr and no timestamps or environment data are recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLError, ConfigError
from .grid import GridFunction, SpaceTimeGrid

__all__ = [
    "FitResult",
    "RateReport",
    "Verdict",
    "ReferenceSolution",
    "fit_order",
    "compare_bounds",
    "run_refinement",
    "write_rate_csv",
    "write_plot_script",
]


@dataclass
class FitResult:
    slope: float
    r2: float
    n_used: int
    degenerate: bool
    note: str = ""


def fit_order(params, errors) -> FitResult:
    """Least-squares slope of log(error) against log(param).

    Zero errors are excluded (with a note); fewer than two positive
    entries makes the fit degenerate with slope 0.
    """
    params = [float(p) for p in params]
    errors = [float(e) for e in errors]
    if len(params) != len(errors):
        raise ConfigError("fit_order: params and errors must have equal length")
    if any(p <= 0.0 for p in params):
        raise ConfigError("fit_order: params must be strictly positive")
    if any(e < 0.0 for e in errors):
        raise ConfigError("fit_order: errors must be nonnegative")
    pairs = [(p, e) for p, e in zip(params, errors) if e > 0.0]
    dropped = len(params) - len(pairs)
    note = f"{dropped} zero-error level(s) excluded" if dropped else ""
    if len(pairs) < 2:
        return FitResult(slope=0.0, r2=0.0, n_used=len(pairs), degenerate=True,
                         note=note or "degenerate: zero error")
    lx = np.log([p for p, _ in pairs])
    ly = np.log([e for _, e in pairs])
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot < 1e-30:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return FitResult(slope=float(slope), r2=r2, n_used=len(pairs), degenerate=False, note=note)


@dataclass
class RateReport:
    """Per-level signed errors against a refinement parameter, plus the fit."""

    param_name: str
    params: list
    err_plus: list
    err_minus: list
    err_total: list
    slope: float
    r2: float
    exponent: float
    degenerate: bool = False
    dxs: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.params) < 2:
            raise ConfigError("rate report needs at least two levels")
        if any(b > a + 1e-15 for a, b in zip(self.params, self.params[1:])):
            raise ConfigError("rate report levels must be sorted descending in parameter")
        if not math.isfinite(self.slope):
            raise ConfigError("rate report slope must be finite")

    def monotone_nonincreasing(self) -> bool:
        return all(b <= a * (1.0 + 1e-12) + 1e-300
                   for a, b in zip(self.err_total, self.err_total[1:]))


@dataclass
class Verdict:
    passed: bool
    reason: str


def compare_bounds(report: RateReport, exponent_lower: float,
                   tolerance: float = 0.05) -> Verdict:
    """Pass iff fitted slope >= exponent_lower - tolerance and total errors
    are monotone nonincreasing across levels.  Degenerate (all-zero error)
    reports pass vacuously."""
    if report.degenerate:
        return Verdict(True, "degenerate: zero error at every level; bound holds trivially")
    if not report.monotone_nonincreasing():
        return Verdict(False, f"errors not monotone nonincreasing: {report.err_total}")
    floor = exponent_lower - tolerance
    if report.slope < floor:
        return Verdict(False, f"slope {report.slope:.4f} below floor {floor:.4f}")
    return Verdict(True, f"slope {report.slope:.4f} >= {floor:.4f} and errors monotone")


class ReferenceSolution:
    """Reference values at the final time: exact evaluator or fine-grid numeric."""

    def __init__(self, kind: str, exact=None, fine: GridFunction = None):
        if kind == "exact":
            if exact is None:
                raise ConfigError("exact reference needs an evaluator (t, X) -> values")
            self.exact = exact
        elif kind == "fine":
            if fine is None:
                raise ConfigError("fine reference needs a GridFunction")
            self.fine = fine
        else:
            raise ConfigError(f"unknown reference kind {kind!r}")
        self.kind = kind

    def values_on(self, grid: SpaceTimeGrid, t: float) -> np.ndarray:
        if self.kind == "exact":
            return np.asarray(self.exact(t, grid.nodes()), dtype=float)
        fg = self.fine.grid
        if fg.dim != grid.dim or abs(fg.period - grid.period) > 1e-12 * grid.period:
            raise ConfigError("fine reference grid does not match the coarse grid domain")
        if fg.n_x % grid.n_x != 0:
            raise ConfigError(
                f"fine reference n_x={fg.n_x} is not a multiple of coarse n_x={grid.n_x}")
        ratio = fg.n_x // grid.n_x
        if ratio & (ratio - 1):
            raise ConfigError(f"fine/coarse n_x ratio {ratio} is not a power of 2")
        sl = tuple(slice(None, None, ratio) for _ in range(grid.dim))
        return self.fine.values[sl].copy()


def run_refinement(problem, scheme_options: dict, levels, reference: ReferenceSolution,
                   exponent: float = 0.0, max_over_time: bool = False) -> RateReport:
    """Solve `problem` at each (n_x, dt_target) level and fit error vs h.

    Levels are sorted by decreasing h.  Every level must satisfy the CFL
    bound (a violation aborts the study); a level that fails for another
    reason is recorded in the notes and skipped, and at least two
    surviving levels are required.  Errors are measured at the final
    time (or, with max_over_time, the worst level over all times).
    """
    from .scheme import ThetaScheme  # local import to avoid a cycle

    entries = []
    notes = []
    for n_x, dt_target in levels:
        grid = SpaceTimeGrid.build(problem.dim, problem.period, int(n_x), problem.T,
                                   float(dt_target))
        try:
            scheme = ThetaScheme(problem, grid, **scheme_options)
            result = scheme.solve()
        except CFLError:
            raise
        except Exception as exc:  # record and continue with remaining levels
            notes.append(f"level n_x={n_x} dt={dt_target!r} failed: {exc}")
            continue
        if max_over_time:
            ep = em = et = 0.0
            for n, t in enumerate(grid.times()):
                d = reference.values_on(grid, t) - result.values(n)
                ep = max(ep, float(np.max(np.maximum(d, 0.0))))
                em = max(em, float(np.max(np.maximum(-d, 0.0))))
                et = max(et, float(np.max(np.abs(d))))
        else:
            d = reference.values_on(grid, grid.T) - result.final.values
            ep = float(np.max(np.maximum(d, 0.0)))
            em = float(np.max(np.maximum(-d, 0.0)))
            et = float(np.max(np.abs(d)))
        entries.append((grid.h(), grid.dx, grid.dt, ep, em, et))

    if len(entries) < 2:
        raise ConfigError(
            "refinement inconclusive: fewer than two levels solved; " + "; ".join(notes))
    entries.sort(key=lambda e: -e[0])
    hs = [e[0] for e in entries]
    fit = fit_order(hs, [e[5] for e in entries])
    if fit.note:
        notes.append(fit.note)
    return RateReport(
        param_name="h",
        params=hs,
        err_plus=[e[3] for e in entries],
        err_minus=[e[4] for e in entries],
        err_total=[e[5] for e in entries],
        slope=fit.slope,
        r2=fit.r2,
        exponent=exponent,
        degenerate=fit.degenerate,
        dxs=[e[1] for e in entries],
        dts=[e[2] for e in entries],
        notes=notes,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_rate_csv(report: RateReport, path, verdict: Verdict | None = None) -> None:
    """CSV rows: level, dx, dt, h, err_plus, err_minus, err_total, slope, verdict.

    The slope and verdict cells are filled on the last row only.  The
    h column carries the report's refinement parameter (h, dt, or k).
    """
    n = len(report.params)
    dxs = report.dxs or [float("nan")] * n
    dts = report.dts or [float("nan")] * n
    with open(path, "w", newline="") as fh:
        fh.write("level,dx,dt,h,err_plus,err_minus,err_total,slope,verdict\n")
        for i in range(n):
            last = i == n - 1
            slope = _fmt(report.slope) if last else ""
            verd = "" if verdict is None or not last else ("pass" if verdict.passed else "fail")
            fh.write(",".join([
                str(i), _fmt(dxs[i]), _fmt(dts[i]), _fmt(report.params[i]),
                _fmt(report.err_plus[i]), _fmt(report.err_minus[i]),
                _fmt(report.err_total[i]), slope, verd,
            ]) + "\n")
    write_plot_script(path, report.param_name)


def write_plot_script(csv_path, param_name: str = "h") -> None:
    """Emit a gnuplot script next to the CSV (same name, .gp extension)."""
    csv_path = str(csv_path)
    gp_path = csv_path[:-4] + ".gp" if csv_path.endswith(".csv") else csv_path + ".gp"
    name = csv_path.rsplit("/", 1)[-1]
    lines = [
        f"# convergence plot for {name}",
        'set datafile separator ","',
        "set key autotitle columnhead left top",
        "set logscale xy",
        f'set xlabel "{param_name}"',
        'set ylabel "sup error"',
        f'plot "{name}" using 4:7 with linespoints, \\',
        f'     "{name}" using 4:5 with linespoints, \\',
        f'     "{name}" using 4:6 with linespoints',
        "pause -1",
    ]
    with open(gp_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
