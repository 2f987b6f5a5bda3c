"""Damped Newton solver for the nondegenerate Dirichlet problems and the
linear comparison solve that produces the ceiling barrier.

The nonlinear equation is posed in log-determinant form,

    log det(g_s + P(phi)) = log(target density),

whose linearization at an admissible iterate is exactly the metric
Laplacian of the perturbed form; the damped Newton iteration therefore
stays inside the positivity cone (enforced by the line search) and shows
quadratic tail convergence.  The discrete operator is the standard
9-point centered stencil on the tensor grid, assembled sparsely over the
interior unknowns with Dirichlet rows eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import matfield as mf
from .errors import PositivityError, SolverError
from .geometry import BackgroundGeometry
from .grid import ReducedGrid
from .ma_core import reduced_hessian_field

LINEAR_DIRECT = "direct"
LINEAR_CG = "cg"


@dataclass
class SolveOptions:
    newton_tol: float = 1e-10
    max_iters: int = 50
    line_search_shrink: float = 0.5
    min_eig_floor: float = 1e-14
    linear_solver: str = LINEAR_DIRECT

    def __post_init__(self):
        if self.newton_tol <= 0 or self.min_eig_floor <= 0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.line_search_shrink < 1.0):
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.linear_solver not in (LINEAR_DIRECT, LINEAR_CG):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class BoundarySpec:
    """Dirichlet data on the grid edges.

    `top` is the t = 0 row, `bottom` the t = t_min row; `left`/`right`
    hold the x-edge traces for truncated fibers and are None for periodic
    ones.  Corner values of intersecting edges must agree.
    """

    top: np.ndarray
    bottom: np.ndarray
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    @classmethod
    def zero(cls, grid: ReducedGrid) -> "BoundarySpec":
        left = right = None
        if not grid.periodic:
            left = np.zeros(grid.nt)
            right = np.zeros(grid.nt)
        return cls(top=np.zeros(grid.nx), bottom=np.zeros(grid.nx),
                   left=left, right=right)

    @classmethod
    def from_field(cls, grid: ReducedGrid, values: np.ndarray) -> "BoundarySpec":
        left = right = None
        if not grid.periodic:
            left = values[0, :].copy()
            right = values[-1, :].copy()
        return cls(top=values[:, -1].copy(), bottom=values[:, 0].copy(),
                   left=left, right=right)

    def apply(self, values: np.ndarray) -> None:
        values[:, -1] = self.top
        values[:, 0] = self.bottom
        if self.left is not None:
            values[0, :] = self.left
        if self.right is not None:
            values[-1, :] = self.right

    def max_abs(self) -> float:
        parts = [self.top, self.bottom]
        parts += [p for p in (self.left, self.right) if p is not None]
        return max(float(np.abs(p).max()) for p in parts)

    def range(self) -> tuple[float, float]:
        parts = [self.top, self.bottom]
        parts += [p for p in (self.left, self.right) if p is not None]
        lo = min(float(p.min()) for p in parts)
        hi = max(float(p.max()) for p in parts)
        return lo, hi


@dataclass
class PotentialField:
    """Grid values of a reduced potential together with its solve record."""

    grid: ReducedGrid
    values: np.ndarray
    s: float | None = None
    boundary: BoundarySpec | None = None
    converged: bool = False
    final_residual: float = np.nan
    history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def copy(self) -> "PotentialField":
        return PotentialField(self.grid, self.values.copy(), self.s,
                              self.boundary, self.converged,
                              self.final_residual, list(self.history),
                              dict(self.info))


class StencilSpace:
    """Index bookkeeping for the interior unknowns of a tensor grid."""

    def __init__(self, grid: ReducedGrid):
        self.grid = grid
        nx, nt = grid.shape
        mask = grid.interior_mask(1)
        self.mask = mask
        self.index = -np.ones(grid.shape, dtype=np.int64)
        self.index[mask] = np.arange(mask.sum())
        self.ii, self.jj = np.nonzero(mask)
        self.n = int(mask.sum())

    def _neighbor(self, di: int, dj: int):
        """Unknown indices of the (di, dj)-shifted neighbors (-1 where the
        neighbor is a Dirichlet point)."""
        grid = self.grid
        i = self.ii + di
        if grid.periodic:
            i = i % grid.nx
        j = self.jj + dj
        valid = (j >= 0) & (j < grid.nt)
        if not grid.periodic:
            valid &= (i >= 0) & (i < grid.nx)
        out = -np.ones(self.n, dtype=np.int64)
        out[valid] = self.index[i[valid], j[valid]]
        return out

    def laplacian_matrix(self, invg: np.ndarray) -> sp.csr_matrix:
        """Matrix of f -> invg^{jk} P(f)_{jk} over interior unknowns."""
        grid = self.grid
        a = grid.fiber_weight
        cxx = invg[self.ii, self.jj, 0, 0] * a * a / grid.hx ** 2
        ctt = invg[self.ii, self.jj, 1, 1] / grid.ht ** 2
        cxt = invg[self.ii, self.jj, 0, 1] * a / (2.0 * grid.hx * grid.ht)
        rows, cols, vals = [], [], []

        def add(di, dj, coeff):
            nbr = self._neighbor(di, dj)
            ok = nbr >= 0
            rows.append(np.arange(self.n)[ok])
            cols.append(nbr[ok])
            vals.append(np.broadcast_to(coeff, (self.n,))[ok])

        add(0, 0, -2.0 * (cxx + ctt))
        add(1, 0, cxx)
        add(-1, 0, cxx)
        add(0, 1, ctt)
        add(0, -1, ctt)
        add(1, 1, cxt)
        add(-1, -1, cxt)
        add(1, -1, -cxt)
        add(-1, 1, -cxt)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n))

    def scatter(self, flat: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out[self.mask] = flat
        return out

    def gather(self, fieldvals: np.ndarray) -> np.ndarray:
        return fieldvals[self.mask]


def _linear_solve(A: sp.csr_matrix, rhs: np.ndarray, opts: SolveOptions) -> np.ndarray:
    if opts.linear_solver == LINEAR_DIRECT:
        try:
            return spla.spsolve(A, rhs)
        except RuntimeError as exc:  # singular factorization
            raise SolverError(f"sparse linear solve failed: {exc}") from exc
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise SolverError("zero diagonal entry; cannot precondition")
    M = sp.diags(1.0 / diag)
    x, info = spla.cg(A, rhs, rtol=1e-12, atol=0.0, maxiter=20 * len(rhs), M=M)
    if info != 0:
        raise SolverError(f"conjugate-gradient solve did not converge (info={info})")
    return x


def solve_poisson_hat(bg: BackgroundGeometry, s_values,
                      opts: SolveOptions | None = None) -> PotentialField:
    """Ceiling barrier: the metric-Laplacian solve with constant source.

    Solves Lap_{g_eps} f = -C with zero Dirichlet data, where C is the
    numerical maximum over the grid and over the given family parameters
    of the g_eps-trace of the family form.  The result is nonnegative
    (discrete maximum principle of the M-matrix stencil for diagonal
    backgrounds) and bounds every admissible continuation iterate above.
    """
    opts = opts or SolveOptions()
    grid = bg.grid
    inv_eps = bg.omega_eps().inv()
    c_val = 0.0
    for s in s_values:
        g_s = bg.omega_s(float(s)).g
        tr = np.einsum("...jk,...jk->...", inv_eps, g_s)
        c_val = max(c_val, float(tr.max()))
    space = StencilSpace(grid)
    A = space.laplacian_matrix(inv_eps)
    rhs = np.full(space.n, -c_val)
    sol = _linear_solve(A, rhs, opts)
    values = space.scatter(sol)
    hat = PotentialField(grid, values, s=None, boundary=BoundarySpec.zero(grid),
                         info={"constant": c_val})
    lap = np.einsum("...jk,...jk->...", inv_eps,
                    reduced_hessian_field(grid, values))
    resid = float(np.abs(lap[grid.interior_mask()] + c_val).max())
    hat.info["residual"] = resid
    if resid > 1e-8 * max(1.0, c_val):
        raise SolverError(f"barrier residual {resid:g} too large")
    if values.min() < -1e-10 * max(1.0, c_val):
        raise SolverError("barrier is negative; discretization is not "
                          "an M-matrix for this background")
    hat.converged = True
    hat.final_residual = resid
    return hat


def log_density_for_constant(bg: BackgroundGeometry, c: float) -> np.ndarray:
    """Target log-density log(c * det g_eps) of the constant-ratio equation."""
    if c <= 0:
        raise ValueError("rhs constant must be positive")
    return np.log(c) + np.log(bg.omega_eps().det())


def _local_max3(f: np.ndarray) -> np.ndarray:
    out = f
    for ax in (0, 1):
        out = np.maximum(out, np.maximum(np.roll(out, 1, ax),
                                         np.roll(out, -1, ax)))
    return out


def residual_floor(grid: ReducedGrid, phi: np.ndarray, gp: np.ndarray,
                   mask: np.ndarray) -> float:
    """Rounding floor of the log-determinant residual.

    The Hessian entries are differences of O(|phi|/h^2) terms, so the
    determinant of the perturbed form cannot be evaluated more accurately
    than machine epsilon times that scale; near the degenerate limit the
    determinant itself is small and the relative floor grows.  Newton
    iterations cannot be expected to push the residual below this level.
    """
    eps = np.finfo(float).eps
    a = grid.fiber_weight
    mloc = _local_max3(np.abs(phi)) + np.abs(phi).max() * 1e-3
    n_xx = 4.0 * eps * (a / grid.hx) ** 2 * mloc
    n_tt = 4.0 * eps * mloc / grid.ht ** 2
    n_xt = eps * a * mloc / (grid.hx * grid.ht)
    noise = (np.abs(gp[..., 1, 1]) * n_xx + np.abs(gp[..., 0, 0]) * n_tt
             + 2.0 * np.abs(gp[..., 0, 1]) * n_xt)
    det = mf.det(gp)
    rel = noise[mask] / np.abs(det[mask])
    return float(rel.max())


def newton_solve_density(bg: BackgroundGeometry, s: float,
                         log_rhs_density: np.ndarray,
                         phi_init: PotentialField | None = None,
                         opts: SolveOptions | None = None,
                         boundary: BoundarySpec | None = None) -> PotentialField:
    """Damped Newton iteration for log det(g_s + P(phi)) = log_rhs_density.

    The line search halves the step until the perturbed form stays
    uniformly positive definite on the interior and the max-norm residual
    decreases; iterates therefore never leave the positivity cone.

    Raises
    ------
    SolverError
        On line-search stall, iteration budget exhaustion, or a singular
        linearization.
    """
    opts = opts or SolveOptions()
    grid = bg.grid
    if s <= 0.0:
        raise ValueError("the nondegenerate solver needs s > 0")
    g_s = bg.omega_s(s).g
    if boundary is None:
        boundary = (phi_init.boundary if phi_init is not None and
                    phi_init.boundary is not None else BoundarySpec.zero(grid))
    phi = np.zeros(grid.shape) if phi_init is None else phi_init.values.copy()
    boundary.apply(phi)
    space = StencilSpace(grid)
    mask = space.mask

    def residual(values):
        gp = g_s + reduced_hessian_field(grid, values)
        me = mf.min_eig(gp)[mask].min()
        if me <= opts.min_eig_floor:
            return None, None, me
        r = np.log(mf.det(gp)) - log_rhs_density
        return r, gp, me

    r, gp, me = residual(phi)
    if r is None:
        raise SolverError(
            f"initial iterate leaves the positivity cone (min eig {me:g})")
    res = float(np.abs(r[mask]).max())
    history = [res]

    for _ in range(opts.max_iters):
        if res <= opts.newton_tol:
            out = PotentialField(grid, phi, s=s, boundary=boundary,
                                 converged=True, final_residual=res,
                                 history=history)
            return out
        A = space.laplacian_matrix(mf.inv(gp))
        try:
            step_flat = _linear_solve(A, -space.gather(r), opts)
        except SolverError:
            raise
        if not np.all(np.isfinite(step_flat)):
            raise SolverError("singular Newton linearization")
        step = space.scatter(step_flat)
        tau = 1.0
        stalled = False
        while True:
            trial = phi + tau * step
            r_new, gp_new, _ = residual(trial)
            if r_new is not None:
                res_new = float(np.abs(r_new[mask]).max())
                if (res_new <= (1.0 - 0.2 * tau) * res
                        or res_new <= 0.5 * opts.newton_tol):
                    break
            tau *= opts.line_search_shrink
            if tau < 1e-8:
                # accept a stall at the rounding floor of the residual
                floor = residual_floor(grid, phi, gp, mask)
                if res <= max(opts.newton_tol, 8.0 * floor):
                    stalled = True
                    break
                raise SolverError(
                    "line-search stall: cannot maintain positivity and "
                    f"residual decrease at residual {res:g} "
                    f"(rounding floor {floor:g})")
        if stalled:
            out = PotentialField(grid, phi, s=s, boundary=boundary,
                                 converged=True, final_residual=res,
                                 history=history,
                                 info={"stalled_at_rounding_floor": True})
            return out
        phi, r, gp, res = trial, r_new, gp_new, res_new
        history.append(res)

    if res <= opts.newton_tol:
        return PotentialField(grid, phi, s=s, boundary=boundary,
                              converged=True, final_residual=res,
                              history=history)
    raise SolverError(f"Newton iteration exceeded {opts.max_iters} iterations "
                      f"(residual {res:g}); history={history}")


def newton_solve(bg: BackgroundGeometry, s: float, rhs_constant: float,
                 phi_init: PotentialField | None = None,
                 opts: SolveOptions | None = None,
                 boundary: BoundarySpec | None = None) -> PotentialField:
    """Solve the constant-ratio equation det(g_s + P(phi)) = c det g_eps."""
    log_rhs = log_density_for_constant(bg, rhs_constant)
    out = newton_solve_density(bg, s, log_rhs, phi_init, opts, boundary)
    out.info["rhs_constant"] = rhs_constant
    return out


def discrete_reg_profile(bg: BackgroundGeometry) -> np.ndarray:
    """Grid profile R(t) whose centered second difference equals the
    regularization coefficient r''(t) exactly at interior rows.

    Differs from r(t) by O(ht^2) (and matches it at both t-ends); using it
    in potential shifts makes the discrete form identities hold to
    roundoff instead of truncation error.
    """
    grid = bg.grid
    t = grid.t
    nt = grid.nt
    r_tt = np.asarray(bg.reg.d2(t), dtype=float)
    rhs = r_tt[1:-1] * grid.ht ** 2
    r_ends = (float(bg.reg.value(t[0])), float(bg.reg.value(t[-1])))
    rhs[0] -= r_ends[0]
    rhs[-1] -= r_ends[1]
    ab = np.zeros((3, nt - 2))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0
    ab[2, :-1] = 1.0
    from scipy.linalg import solve_banded
    interior = solve_banded((1, 1), ab, rhs)
    out = np.empty(nt)
    out[0], out[-1] = r_ends
    out[1:-1] = interior
    return out


def transported_init(phi_old: PotentialField, bg: BackgroundGeometry,
                     s_old: float, s_new: float) -> np.ndarray:
    """Warm-start values for the next family parameter.

    Adds the end-matched regularization profile scaled by (s_old - s_new),
    which transports the perturbed form exactly: the new iterate satisfies
    g_{s_new} + P(new) = g_{s_old} + P(old) at interior rows, so it stays
    in the positivity cone, and the profile vanishes on both t-edges so
    Dirichlet rows are untouched.  Only valid for periodic fibers (on
    truncated fibers the profile would disturb the x-edge data).
    """
    grid = phi_old.grid
    if not grid.periodic:
        raise ValueError("form-transported warm starts need a periodic fiber")
    prof = discrete_reg_profile(bg)
    line = prof[-1] + (prof[0] - prof[-1]) * grid.t / grid.t_min
    return phi_old.values + (s_old - s_new) * (prof - line)[None, :]


def shift_to_epsilon_background(phi_s: PotentialField, bg: BackgroundGeometry,
                                s: float) -> PotentialField:
    """Rewrite a family-form potential relative to the regularized form.

    Returns psi with g_eps + P(psi) = g_s + P(phi) at every interior row
    to machine precision; concretely psi = phi + (s - 1)(eps * t + R(t))
    with R the discretely compatible regularization profile, i.e. the
    divisor-weighted shift scaled by the family parameter.  At s = 1 the
    shift vanishes; at s = 0 it is the full divisor weight up to O(h^2).
    """
    grid = phi_s.grid
    shift = (s - 1.0) * (bg.epsilon * grid.t + discrete_reg_profile(bg))
    values = phi_s.values + shift[None, :]
    out = PotentialField(grid, values, s=1.0,
                         boundary=BoundarySpec.from_field(grid, values),
                         converged=phi_s.converged,
                         final_residual=phi_s.final_residual,
                         info={"shifted_from_s": s})
    return out
