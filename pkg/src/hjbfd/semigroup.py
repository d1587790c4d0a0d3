"""Semigroup-style schemes: operator splitting and piecewise-constant controls.

Both schemes advance the solution by composing sub-semigroups that are
themselves realized numerically as implicit (theta = 1) finite-difference
flows on a shared spatial grid:

* splitting: S(dt) = S_1(dt) S_2(dt), where S_j solves the Bellman flow
  of coefficient family j alone and family 2 is applied first;
* piecewise-constant controls: S(dt) = min_i S_i(dt), where S_i is the
  linear flow of mode i.

Mode normalization for the piecewise-constant scheme: a mode with data
(sigma, b, c, f) evolves v_t - tr[sigma sigma^T D^2 v] - b.Dv - c v - f = 0,
i.e. the diffusion matrix is sigma sigma^T without the half factor that
the nonlinear scheme attaches.  The implementation absorbs the factor by
scaling sigma with sqrt(2) before handing the mode to the solver.

Error orientation matches the harness: d = u_ref - u_h, err_plus = |d^+|_0,
err_minus = |d^-|_0.  For the piecewise-constant scheme err_plus is the
one-sided violation (the scheme must dominate the reference).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .grid import SpaceTimeGrid
from .harness import RateReport, fit_order
from .problem import SmoothFunction, make_problem
from .scheme import ProbeResult, ThetaScheme

__all__ = [
    "SemigroupFlow",
    "SplitProblem",
    "PCControlProblem",
    "SplitCheck",
    "sigma_from_diffusion",
    "sub_semigroup_apply",
    "splitting_step",
    "splitting_solve",
    "inner_error_estimate",
    "calibrate_inner_steps",
    "semigroup_rate_experiment",
    "splitting_rate_experiment",
    "splitting_vs_inner_check",
    "splitting_consistency_sweep",
    "pc_step",
    "pcc_solve",
    "pcc_rate_experiment",
    "semigroup_monotonicity_probe",
    "semigroup_nonexpansive_probe",
]


def sigma_from_diffusion(a):
    """Return sigma with (1/2) sigma sigma^T = a.

    Scalars and vectors map to sqrt(2 a) (entrywise); symmetric PSD
    matrices go through an eigendecomposition.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        if arr < 0.0:
            raise ConfigError("sigma_from_diffusion: negative diffusion")
        return float(math.sqrt(2.0 * float(arr)))
    if arr.ndim == 1:
        if np.any(arr < 0.0):
            raise ConfigError("sigma_from_diffusion: negative diagonal diffusion")
        return np.sqrt(2.0 * arr)
    w, v = np.linalg.eigh(0.5 * (arr + arr.T))
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.min(w) < -1e-10 * scale:
        raise ConfigError("sigma_from_diffusion: diffusion matrix is not PSD")
    return v @ np.diag(np.sqrt(2.0 * np.clip(w, 0.0, None))) @ v.T


def _const_matrix(val, dim: int, what: str) -> np.ndarray:
    if callable(val):
        raise ConfigError(f"{what}: semigroup families need constant sigma")
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(dim)
    elif arr.ndim == 1:
        if arr.shape != (dim,):
            raise ConfigError(f"{what}: diagonal must have length {dim}")
        arr = np.diag(arr)
    elif arr.ndim != 2 or arr.shape[0] != dim:
        raise ConfigError(f"{what}: expected {dim} rows")
    return arr


def _const_vector(val, dim: int, what: str) -> np.ndarray:
    if callable(val):
        raise ConfigError(f"{what}: semigroup families need constant drift")
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ConfigError(f"{what}: expected scalar or length-{dim} vector")
    return arr


def _const_scalar(val, what: str) -> float:
    if callable(val):
        raise ConfigError(f"{what}: semigroup families need constant discounting")
    return float(val)


def _norm_family(entries, dim: int, what: str):
    if not entries:
        raise ConfigError(f"{what}: family needs at least one control")
    out = []
    for i, spec in enumerate(entries):
        out.append({
            "sigma": _const_matrix(spec.get("sigma", 0.0), dim, f"{what}[{i}] sigma"),
            "b": _const_vector(spec.get("b", 0.0), dim, f"{what}[{i}] b"),
            "c": _const_scalar(spec.get("c", 0.0), f"{what}[{i}] c"),
            "f": spec.get("f", 0.0),
        })
    return out


def _sum_f(f1, f2):
    if not callable(f1) and not callable(f2):
        return float(f1) + float(f2)

    def f(t, X):
        out = 0.0
        for piece in (f1, f2):
            if callable(piece):
                out = out + np.asarray(piece(t, X), dtype=float)
            else:
                out = out + float(piece)
        return out

    return f


class SemigroupFlow:
    """Implicit-Euler realization of the flow of one coefficient family.

    apply(values, dt, m) advances `values` by time dt using m implicit
    substeps of size dt/m; the family clock restarts at 0 each call
    (families are treated as autonomous).
    """

    def __init__(self, dim: int, period: float, n_x: int, controls,
                 builder: str = "kushner", tol: float = 1e-11, label: str = "flow"):
        if not controls:
            raise ConfigError("semigroup flow needs at least one control")
        self.dim = dim
        self.period = period
        self.n_x = n_x
        self.controls = list(controls)
        self.builder = builder
        self.tol = tol
        self.label = label
        self._cache = {}

    def _scheme(self, dt: float, m: int) -> ThetaScheme:
        key = (float(dt), int(m))
        sch = self._cache.get(key)
        if sch is None:
            grid = SpaceTimeGrid.build(self.dim, self.period, self.n_x, float(dt),
                                       float(dt) / int(m))
            if grid.n_t != int(m):
                raise ConfigError(f"flow substep count mismatch: {grid.n_t} != {m}")
            problem = make_problem(self.dim, self.period, float(dt), self.controls,
                                   u0=0.0, label=self.label)
            sch = ThetaScheme(problem, grid, theta=1.0, builder=self.builder, tol=self.tol)
            self._cache[key] = sch
        return sch

    def apply(self, values: np.ndarray, dt: float, m: int) -> np.ndarray:
        if not (dt > 0.0) or m < 1:
            raise ConfigError("flow apply needs dt > 0 and m >= 1")
        sch = self._scheme(dt, m)
        u = np.asarray(values, dtype=float).copy()
        delta = sch.grid.dt
        for k in range(m):
            u, _ = sch.step(u, k * delta)
        return u


def sub_semigroup_apply(flow: SemigroupFlow, values: np.ndarray, dt: float,
                        m: int) -> np.ndarray:
    """Advance `values` by dt under one family's flow with m implicit substeps."""
    return flow.apply(values, dt, m)


@dataclass
class SplitProblem:
    """Two coefficient families on a shared torus grid and horizon.

    Each family entry is a dict {sigma, b, c, f} with constant sigma, b, c
    (f may be callable(t, X)).  The combined problem takes the sup over
    the product control set, which is the equation the splitting scheme
    approximates.
    """

    dim: int
    period: float
    T: float
    family1: list
    family2: list
    u0: object
    n_x: int
    builder: str = "kushner"
    tol: float = 1e-11
    label: str = "split"

    def __post_init__(self):
        if self.n_x < 3:
            raise ConfigError("split problem needs n_x >= 3")
        self.family1 = _norm_family(self.family1, self.dim, f"{self.label} family1")
        self.family2 = _norm_family(self.family2, self.dim, f"{self.label} family2")
        self._flows = None
        self._combined = None

    def spatial_grid(self) -> SpaceTimeGrid:
        return SpaceTimeGrid.build(self.dim, self.period, self.n_x, self.T, self.T)

    def flows(self):
        if self._flows is None:
            self._flows = tuple(
                SemigroupFlow(self.dim, self.period, self.n_x, fam, builder=self.builder,
                              tol=self.tol, label=f"{self.label} family{j + 1}")
                for j, fam in enumerate((self.family1, self.family2))
            )
        return self._flows

    def combined_problem(self):
        """Sup over the product control set: one control per family pair."""
        if self._combined is None:
            specs = []
            for e1 in self.family1:
                for e2 in self.family2:
                    specs.append({
                        "sigma": np.hstack([e1["sigma"], e2["sigma"]]),
                        "b": e1["b"] + e2["b"],
                        "c": e1["c"] + e2["c"],
                        "f": _sum_f(e1["f"], e2["f"]),
                    })
            self._combined = make_problem(self.dim, self.period, self.T, specs,
                                          u0=self.u0, label=f"{self.label} combined")
        return self._combined

    def initial_values(self) -> np.ndarray:
        return self.combined_problem().u0_values(self.spatial_grid().nodes())


def splitting_step(sp: SplitProblem, values: np.ndarray, dt: float, m: int) -> np.ndarray:
    """One macro step S_1(dt) S_2(dt): family 2 first, then family 1."""
    f1, f2 = sp.flows()
    return f1.apply(f2.apply(values, dt, m), dt, m)


def _macro_count(T: float, dt: float, what: str) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigError(f"{what}: dt={dt!r} does not divide the horizon T={T!r}")
    return n


def splitting_solve(sp: SplitProblem, dt: float, m: int) -> np.ndarray:
    """March the splitting scheme from u0 to T with macro step dt."""
    n = _macro_count(sp.T, dt, "splitting_solve")
    u = sp.initial_values()
    for _ in range(n):
        u = splitting_step(sp, u, dt, m)
    return u


def inner_error_estimate(sp: SplitProblem, dt: float, m: int):
    """First-order Richardson estimate of the inner-stepping error.

    Runs the full horizon with m and 2m substeps; for an O(dt/m) inner
    method the error of the m-run is approximately 2 |U_m - U_2m|_0.
    Returns (estimate, U_2m).
    """
    u_m = splitting_solve(sp, dt, m)
    u_2m = splitting_solve(sp, dt, 2 * m)
    return 2.0 * float(np.max(np.abs(u_m - u_2m))), u_2m


def calibrate_inner_steps(sp: SplitProblem, dt: float, reference: np.ndarray,
                          m0: int = 2, cap: int = 256, fraction: float = 0.01) -> int:
    """Double m until the inner-stepping error estimate is at most `fraction`
    of the splitting error against `reference` (or the cap is reached).
    The finer run of each Richardson pair seeds the next iteration."""
    m = int(m0)
    u_m = splitting_solve(sp, dt, m)
    while True:
        u_2m = splitting_solve(sp, dt, 2 * m)
        est = 2.0 * float(np.max(np.abs(u_m - u_2m)))
        split_est = float(np.max(np.abs(u_2m - reference)))
        if est <= fraction * split_est or m >= cap:
            return m
        m *= 2
        u_m = u_2m


def _signed_errors(ref: np.ndarray, u: np.ndarray):
    d = ref - u
    return (float(np.max(np.maximum(d, 0.0))),
            float(np.max(np.maximum(-d, 0.0))),
            float(np.max(np.abs(d))))


def _combined_reference(problem, grid_template: SpaceTimeGrid, dt_ref: float,
                        builder: str, tol: float) -> np.ndarray:
    grid = SpaceTimeGrid.build(grid_template.dim, grid_template.period,
                               grid_template.n_x, grid_template.T, dt_ref)
    scheme = ThetaScheme(problem, grid, theta=1.0, builder=builder, tol=tol)
    return scheme.solve().final.values


def semigroup_rate_experiment(stepper, reference, dt_list, exponent: float,
                              param_name: str = "dt", dx: float = float("nan"),
                              notes=None) -> RateReport:
    """Macro-step rate study for any one-parameter stepper.

    stepper(dt) must return final-time values on the reference's grid;
    the signed errors reference - stepper(dt) are fitted log-log against
    dt (levels sorted descending).
    """
    dts = sorted((float(d) for d in dt_list), reverse=True)
    if len(dts) < 2:
        raise ConfigError("semigroup_rate_experiment needs at least two macro steps")
    ref = np.asarray(reference, dtype=float)
    ep, em, et = [], [], []
    for d in dts:
        p, mi, tot = _signed_errors(ref, np.asarray(stepper(d), dtype=float))
        ep.append(p)
        em.append(mi)
        et.append(tot)
    fit = fit_order(dts, et)
    notes = list(notes or [])
    if fit.note:
        notes.append(fit.note)
    return RateReport(param_name=param_name, params=dts, err_plus=ep, err_minus=em,
                      err_total=et, slope=fit.slope, r2=fit.r2, exponent=exponent,
                      degenerate=fit.degenerate, dxs=[dx] * len(dts), dts=dts,
                      notes=notes)


def splitting_rate_experiment(sp: SplitProblem, dt_list, m: int | None = None,
                              ref_factor: int = 16, exponent: float = 1.0 / 13.0) -> RateReport:
    """Errors of the splitting scheme against an implicit combined-problem
    solve at dt_min/ref_factor, fitted against the macro step.

    When m is None the substep count is calibrated at the finest macro
    step so the inner error is at most 1% of the splitting error.
    """
    dts = sorted((float(d) for d in dt_list), reverse=True)
    if len(dts) < 2:
        raise ConfigError("splitting_rate_experiment needs at least two macro steps")
    for d in dts:
        _macro_count(sp.T, d, "splitting_rate_experiment")
    tmpl = sp.spatial_grid()
    ref = _combined_reference(sp.combined_problem(), tmpl, dts[-1] / ref_factor,
                              sp.builder, sp.tol)
    notes = [f"reference dt={dts[-1] / ref_factor!r}"]
    if m is None:
        m = calibrate_inner_steps(sp, dts[-1], ref)
        notes.append(f"inner substeps calibrated: m={m}")
    else:
        notes.append(f"inner substeps m={m}")
    return semigroup_rate_experiment(lambda d: splitting_solve(sp, d, m), ref, dts,
                                     exponent, dx=tmpl.dx, notes=notes)


@dataclass
class SplitCheck:
    """Commutation diagnostic: splitting error vs inner-stepping error."""

    splitting_error: float
    inner_estimate: float
    reference_dt: float

    @property
    def ratio(self) -> float:
        if self.inner_estimate == 0.0:
            return math.inf if self.splitting_error > 0.0 else 0.0
        return self.splitting_error / self.inner_estimate


def splitting_vs_inner_check(sp: SplitProblem, dt: float, m: int,
                             ref_factor: int = 16) -> SplitCheck:
    """Compare the total splitting error at one macro step against the
    Richardson inner-error estimate.  For families with commuting
    generators the two are of the same size (no splitting defect)."""
    u_m = splitting_solve(sp, dt, m)
    u_2m = splitting_solve(sp, dt, 2 * m)
    inner_est = 2.0 * float(np.max(np.abs(u_m - u_2m)))
    dt_ref = (dt / m) / ref_factor
    ref = _combined_reference(sp.combined_problem(), sp.spatial_grid(), dt_ref,
                              sp.builder, sp.tol)
    return SplitCheck(splitting_error=float(np.max(np.abs(u_m - ref))),
                      inner_estimate=inner_est, reference_dt=dt_ref)


def _family_sup(entries, t, X, r, p, H):
    """sup over a family of -tr[a H] - b.p - c r - f, a = (1/2) sigma sigma^T."""
    best = None
    for e in entries:
        a = 0.5 * (e["sigma"] @ e["sigma"].T)
        lin = (-np.einsum("ij,...ji->...", a, H)
               - np.einsum("i,...i->...", e["b"], p) - e["c"] * r)
        fv = e["f"](t, X) if callable(e["f"]) else float(e["f"])
        val = lin - fv
        best = val if best is None else np.maximum(best, val)
    return best


def splitting_consistency_sweep(sp: SplitProblem, phi: SmoothFunction, dt_list,
                                m: int):
    """Residual (S(dt) phi - phi)/dt + F_1(phi) + F_2(phi) on the grid nodes
    for each macro step, plus the log-log fit of residual against dt.
    The sweep is diagnostic; no order is asserted."""
    grid = sp.spatial_grid()
    X = grid.nodes()
    r = np.asarray(phi.value(0.0, X), dtype=float)
    p = np.asarray(phi.grad(0.0, X), dtype=float)
    H = np.asarray(phi.hess(0.0, X), dtype=float)
    target = _family_sup(sp.family1, 0.0, X, r, p, H) + _family_sup(sp.family2, 0.0, X, r, p, H)
    dts = sorted((float(d) for d in dt_list), reverse=True)
    residuals = []
    for d in dts:
        s_phi = splitting_step(sp, r, d, m)
        residuals.append(float(np.max(np.abs((s_phi - r) / d + target))))
    return residuals, fit_order(dts, residuals)


@dataclass
class PCControlProblem:
    """Piecewise-constant-control scheme data: a finite list of modes.

    Each mode dict {sigma, b, c, f} defines the linear flow
    v_t - tr[sigma sigma^T D^2 v] - b.Dv - c v - f = 0 (note: diffusion
    sigma sigma^T, no half factor); the scheme steps every mode and takes
    the pointwise min.  The coupled reference problem is the Bellman
    equation with the same modes as controls.
    """

    dim: int
    period: float
    T: float
    modes: list
    u0: object
    n_x: int
    builder: str = "kushner"
    tol: float = 1e-11
    label: str = "pcc"

    def __post_init__(self):
        norm = _norm_family(self.modes, self.dim, f"{self.label} modes")
        # absorb the solver's half factor: a_eff = sigma sigma^T
        self._effective = [
            {"sigma": math.sqrt(2.0) * e["sigma"], "b": e["b"], "c": e["c"], "f": e["f"]}
            for e in norm
        ]
        self._flows = None
        self._coupled = None

    def spatial_grid(self) -> SpaceTimeGrid:
        return SpaceTimeGrid.build(self.dim, self.period, self.n_x, self.T, self.T)

    def flows(self):
        if self._flows is None:
            self._flows = tuple(
                SemigroupFlow(self.dim, self.period, self.n_x, [eff], builder=self.builder,
                              tol=self.tol, label=f"{self.label} mode{i}")
                for i, eff in enumerate(self._effective)
            )
        return self._flows

    def coupled_problem(self):
        if self._coupled is None:
            self._coupled = make_problem(self.dim, self.period, self.T, self._effective,
                                         u0=self.u0, label=f"{self.label} coupled")
        return self._coupled

    def initial_values(self) -> np.ndarray:
        return self.coupled_problem().u0_values(self.spatial_grid().nodes())


def pc_step(pp: PCControlProblem, values: np.ndarray, dt: float, m: int) -> np.ndarray:
    """Pointwise min over the per-mode flows applied for time dt."""
    out = None
    for flow in pp.flows():
        cand = flow.apply(values, dt, m)
        out = cand if out is None else np.minimum(out, cand)
    return out


def pcc_solve(pp: PCControlProblem, dt: float, m: int) -> np.ndarray:
    """March the piecewise-constant-control scheme from u0 to T."""
    n = _macro_count(pp.T, dt, "pcc_solve")
    u = pp.initial_values()
    for _ in range(n):
        u = pc_step(pp, u, dt, m)
    return u


def pcc_rate_experiment(pp: PCControlProblem, dt_list, min_inner: int = 16,
                        exponent: float = 0.1) -> RateReport:
    """One-sided rate study for the piecewise-constant-control scheme.

    All levels and the coupled reference use the same inner step
    delta = dt_min/min_inner, so the discrete comparison argument applies
    step by step and err_plus (reference exceeding the scheme) stays at
    solver tolerance while err_total carries the rate.
    """
    dts = sorted((float(d) for d in dt_list), reverse=True)
    if len(dts) < 2:
        raise ConfigError("pcc_rate_experiment needs at least two macro steps")
    delta = dts[-1] / int(min_inner)
    for d in dts:
        _macro_count(pp.T, d, "pcc_rate_experiment")
        mj = int(round(d / delta))
        if abs(mj * delta - d) > 1e-9 * d:
            raise ConfigError(
                f"pcc_rate_experiment: dt={d!r} is not a multiple of the common "
                f"inner step {delta!r}")
    tmpl = pp.spatial_grid()
    ref = _combined_reference(pp.coupled_problem(), tmpl, delta, pp.builder, pp.tol)
    notes = [f"common inner step delta={delta!r}",
             "one-sided: err_plus is the reference-above-scheme violation"]
    return semigroup_rate_experiment(
        lambda d: pcc_solve(pp, d, int(round(d / delta))), ref, dts, exponent,
        dx=tmpl.dx, notes=notes)


def semigroup_monotonicity_probe(step_fn, shape, trials: int = 50, seed: int = 0,
                                 slack: float = 1e-9) -> ProbeResult:
    """Apply step_fn to random ordered pairs u <= v; order must be preserved."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = ""
    for trial in range(trials):
        u = rng.uniform(-1.0, 1.0, size=shape)
        v = u + rng.uniform(0.0, 1.0, size=shape)
        gap = float(np.min(step_fn(v) - step_fn(u)))
        if gap < -worst:
            worst = -gap
            witness = f"trial {trial}: min(S v - S u) = {gap!r}"
    return ProbeResult(passed=worst <= slack, checked=trials, worst=worst, witness=witness)


def semigroup_nonexpansive_probe(step_fn, shape, trials: int = 50, seed: int = 0,
                                 slack: float = 1e-9) -> ProbeResult:
    """|S u - S v|_0 <= |u - v|_0 over random pairs."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    witness = ""
    for trial in range(trials):
        u = rng.uniform(-1.0, 1.0, size=shape)
        v = rng.uniform(-1.0, 1.0, size=shape)
        lhs = float(np.max(np.abs(step_fn(u) - step_fn(v))))
        rhs = float(np.max(np.abs(u - v)))
        if lhs - rhs > worst:
            worst = lhs - rhs
            witness = f"trial {trial}: |Su-Sv|={lhs!r} vs |u-v|={rhs!r}"
    return ProbeResult(passed=worst <= slack, checked=trials, worst=worst, witness=witness)
