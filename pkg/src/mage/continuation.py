"""Viscosity continuation: the decreasing-s schedule of nondegenerate
solves whose limit candidate approximates the degenerate problem.

Each step solves the constant-ratio equation

    det(g_s + P(phi_s)) = c_s det g_eps,

with c_s normalized so the implied ratio against the family volume has
supremum exactly s; the total Monge-Ampere mass of a converged step is
then c_s times the (fixed) regularized volume, so mass/c_s is constant
along the schedule and the mass itself decays with the normalization.

The ceiling barrier from the linear comparison solve certifies the
uniform bound 0 <= phi_s <= barrier for zero boundary data (shifted by
the data range otherwise); a Cauchy tail of sup-norm differences on a
fixed compact subset away from the divisor records the convergence of the
limit candidate, for which no rate is available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matfield as mf
from . import monitors
from .errors import SolverError
from .geometry import BackgroundGeometry
from .grid import quadrature_weights
from .ma_core import reduced_hessian_field
from .solvers import (BoundarySpec, PotentialField, SolveOptions,
                      newton_solve, solve_poisson_hat, transported_init)

SANDWICH_LOW_TOL = 1e-8
SANDWICH_HIGH_TOL = 1e-6


@dataclass
class ContinuationSchedule:
    """Strictly decreasing family parameters with per-step solve options."""

    s_values: tuple
    solve_options: SolveOptions = field(default_factory=SolveOptions)
    compact_fraction: float = 0.5
    stop_tol: float | None = None

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=float)
        if len(s) == 0 or np.any(s <= 0.0) or np.any(s > 1.0):
            raise ValueError("family parameters must lie in (0, 1]")
        if len(s) > 1 and np.any(np.diff(s) >= 0.0):
            raise ValueError("family parameters must be strictly decreasing")
        self.s_values = tuple(float(v) for v in s)

    @classmethod
    def default(cls, n_steps: int = 7, s_start: float = 1e-1,
                ratio: float = 10.0 ** -0.5, **kwargs) -> "ContinuationSchedule":
        vals = s_start * ratio ** np.arange(n_steps)
        return cls(tuple(vals), **kwargs)


@dataclass
class StepRecord:
    s: float
    c_s: float
    sup_F: float
    iterations: int
    residual: float
    mass: float
    mass_expected: float
    sandwich_low: float          # min(phi) - min(boundary data)
    sandwich_excess: float       # max(phi - barrier) - max(boundary data)
    grad_max_compact: float
    cauchy_diff: float | None
    monitor: monitors.MonitorReport | None = None

    def sandwich_ok(self) -> bool:
        return (self.sandwich_low >= -SANDWICH_LOW_TOL
                and self.sandwich_excess <= SANDWICH_HIGH_TOL)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("s", "c_s", "sup_F", "iterations", "residual", "mass",
                "mass_expected", "sandwich_low", "sandwich_excess",
                "grad_max_compact", "cauchy_diff")}
        out["sandwich_ok"] = self.sandwich_ok()
        out["monitor"] = self.monitor.to_dict() if self.monitor else None
        return out


@dataclass
class ContinuationResult:
    schedule: ContinuationSchedule
    barrier: PotentialField
    steps: list
    fields: list
    limit: PotentialField | None
    all_converged: bool
    sandwich_ok: bool
    failure: str | None = None

    def cauchy_tail(self) -> list:
        return [r.cauchy_diff for r in self.steps if r.cauchy_diff is not None]


def choose_fs(bg: BackgroundGeometry, s: float) -> tuple[float, np.ndarray]:
    """Step constant and ratio field of the constant-density equation.

    c_s = s / max(det g_eps / det g_s) over the grid, and the implied
    ratio F_s = c_s det g_eps / det g_s satisfies sup F_s = s exactly.
    """
    if s <= 0.0:
        raise ValueError("the family parameter must be positive")
    det_eps = bg.omega_eps().det()
    det_s = bg.omega_s(s).det()
    ratio = det_eps / det_s
    c_s = s / float(ratio.max())
    return c_s, c_s * ratio


def mass_weights(grid) -> np.ndarray:
    """Quadrature weights over the nodes where the discrete equation is
    imposed: trapezoid (rectangle rule in the periodic direction) on the
    interior sub-rectangle, zero on Dirichlet rows.  Boundary rows only
    carry extrapolated Hessians, so including them would pollute the mass
    identity with discretization noise unrelated to the solve."""
    w = quadrature_weights(grid)
    w = w.copy()
    w[:, 0] = 0.0
    w[:, -1] = 0.0
    w[:, 1] *= 1.5
    w[:, -2] *= 1.5
    if not grid.periodic:
        w[0, :] = 0.0
        w[-1, :] = 0.0
        w[1, :] *= 1.5
        w[-2, :] *= 1.5
    return w


def ma_mass(phi, bg: BackgroundGeometry, s: float) -> float:
    """Monge-Ampere mass of the perturbed family form.

    Quadrature of det(g_s + P(phi)) over the interior nodes (angular
    volumes normalized away); for a converged constant-ratio solve it
    equals c_s times the regularized volume up to the solver tolerance.
    """
    values = phi.values if hasattr(phi, "values") else np.asarray(phi, float)
    gp = bg.omega_s(s).g + reduced_hessian_field(bg.grid, values)
    return float((mf.det(gp) * mass_weights(bg.grid)).sum())


def regularized_volume(bg: BackgroundGeometry) -> float:
    return float((bg.omega_eps().det() * mass_weights(bg.grid)).sum())


def _solve_step(bg, s, c_s, prev, opts, boundary):
    """One schedule step with a warm-start fallback chain.

    Candidates, in order: the form-transported previous iterate (periodic
    fibers; exact cone preservation), the raw previous iterate, and the
    zero initializer (the subsolution).  The first candidate that stays in
    the positivity cone is iterated to convergence.
    """
    candidates = []
    if prev is not None:
        if bg.grid.periodic:
            cand = prev.copy()
            cand.values = transported_init(prev, bg, prev.s, s)
            candidates.append(cand)
        candidates.append(prev)
    candidates.append(None)
    last_exc = None
    for cand in candidates:
        try:
            return newton_solve(bg, s, c_s, phi_init=cand, opts=opts,
                                boundary=boundary), None
        except SolverError as exc:
            last_exc = exc
            if "positivity cone" not in str(exc):
                break
    return None, f"step s={s:g} failed: {last_exc}"


def run_continuation(bg: BackgroundGeometry,
                     schedule: ContinuationSchedule,
                     boundary: BoundarySpec | None = None,
                     with_monitors: bool = True,
                     with_barrier_check: bool = True,
                     barrier_override: PotentialField | None = None,
                     ) -> ContinuationResult:
    """Run the decreasing-s schedule with warm starts.

    A failed step leaves a partial history in the result instead of
    raising; sandwich violations are recorded per step (callers decide the
    exit policy).  `barrier_override` substitutes a precomputed (possibly
    deliberately corrupted) ceiling barrier, for failure-path testing.
    """
    grid = bg.grid
    boundary = boundary or BoundarySpec.zero(grid)
    hat = barrier_override if barrier_override is not None \
        else solve_poisson_hat(bg, schedule.s_values)
    data_lo, data_hi = boundary.range()
    cmask = monitors.compact_mask(bg, schedule.compact_fraction)

    steps: list[StepRecord] = []
    fields: list[PotentialField] = []
    prev: PotentialField | None = None
    failure = None
    vol_eps = regularized_volume(bg)

    for s in schedule.s_values:
        c_s, F_s = choose_fs(bg, s)
        sup_f = float(F_s.max())
        if sup_f > 1.0 + 1e-12:
            raise ValueError(f"ratio normalization failed: sup F = {sup_f}")
        phi, failure = _solve_step(bg, s, c_s, prev, schedule.solve_options,
                                   boundary)
        if phi is None:
            break
        mass = ma_mass(phi, bg, s)
        cauchy = None
        if prev is not None:
            cauchy = float(np.abs(phi.values - prev.values)[cmask].max())
        rec = StepRecord(
            s=s, c_s=c_s, sup_F=sup_f,
            iterations=len(phi.history) - 1,
            residual=phi.final_residual,
            mass=mass, mass_expected=c_s * vol_eps,
            sandwich_low=float(phi.values.min()) - data_lo,
            sandwich_excess=float((phi.values - hat.values).max()) - data_hi,
            grad_max_compact=monitors.grad_max_on_compact(
                phi, bg, schedule.compact_fraction),
            cauchy_diff=cauchy)
        if with_monitors:
            rec.monitor = monitors.full_report(
                phi, bg, s, c_s, hat=hat, mass=mass,
                with_barrier=with_barrier_check)
        steps.append(rec)
        fields.append(phi)
        prev = phi
        if (schedule.stop_tol is not None and cauchy is not None
                and cauchy < schedule.stop_tol):
            break

    return ContinuationResult(
        schedule=schedule, barrier=hat, steps=steps, fields=fields,
        limit=fields[-1] if fields else None,
        all_converged=failure is None and len(fields) > 0,
        sandwich_ok=all(r.sandwich_ok() for r in steps) if steps else False,
        failure=failure)
