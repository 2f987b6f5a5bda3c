"""Runtime monitors for the a priori estimates and proof functionals.

Each monitor is a pure function of (field, background, family parameter):
weighted growth-exponent fits toward the divisor, the two maximum-principle
scans, and the flat-boundary second-order barrier check.  Monitors test
the *structure* of the estimates (boundedness, stability in the family
parameter, boundary-maximum classification, fitted exponent versus the
closed-form bound); the admissible constants of the proofs are never
reproduced numerically.

All norms are taken with respect to the regularized background form, and
the divisor-weighted field is always

    phi_eps = phi - eps * log |sigma|^2,

which blows up logarithmically toward the central fiber and converts the
family background into the fixed regularized one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import matfield as mf
from .errors import PositivityError
from .geometry import BackgroundGeometry
from .grid import d_x, d_t
from .ma_core import (contract_hessian, gamma_fn, grad_norm_sq,
                      reduced_gradient_field, reduced_hessian_field)
from .solvers import PotentialField, shift_to_epsilon_background

BETA_SKIP = 1e-14


def _values(phi):
    return phi.values if hasattr(phi, "values") else np.asarray(phi, dtype=float)


def tsuji_shifted_values(phi, bg: BackgroundGeometry) -> np.ndarray:
    """The divisor-weighted field phi - eps * log |sigma|^2 on the grid."""
    lw = bg.epsilon * bg.log_sigma_sq(bg.grid.t)
    return _values(phi) - lw[None, :]


@dataclass
class FitRecord:
    slope: float
    intercept: float
    rms_residual: float
    n_slices: int
    bound: float | None = None
    F1: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class ScanRecord:
    interior_max: float
    interior_argmax: tuple
    boundary_max: float
    n_skipped: int
    extra: dict

    def to_dict(self):
        d = asdict(self)
        d["interior_argmax"] = list(self.interior_argmax)
        return d


@dataclass
class BarrierCheck:
    lhs: float
    rhs: float
    constant: float
    sup_f: float
    theta_min: float
    n_value: float
    delta: float
    collar_points: int
    satisfied: bool

    def to_dict(self):
        return asdict(self)


@dataclass
class MonitorReport:
    """Per-solve record of the estimate monitors."""

    grad_fit: FitRecord | None = None
    lap_fit: FitRecord | None = None
    alpha_scan: ScanRecord | None = None
    ya_scan: ScanRecord | None = None
    sandwich: tuple | None = None
    mass: float | None = None
    boundary_c2: BarrierCheck | None = None

    def to_dict(self):
        out = {}
        for key in ("grad_fit", "lap_fit", "alpha_scan", "ya_scan",
                    "boundary_c2"):
            val = getattr(self, key)
            out[key] = val.to_dict() if val is not None else None
        out["sandwich"] = list(self.sandwich) if self.sandwich else None
        out["mass"] = self.mass
        return out


def _slice_fit(y_per_slice: np.ndarray, bg: BackgroundGeometry) -> tuple:
    t = bg.grid.t
    z = -bg.log_sigma_sq(t)
    if len(t) < 4:
        raise ValueError("growth fits need at least 4 t-slices")
    coeffs = np.polyfit(z, y_per_slice, 1)
    fitted = np.polyval(coeffs, z)
    rms = float(np.sqrt(np.mean((fitted - y_per_slice) ** 2)))
    return float(coeffs[0]), float(coeffs[1]), rms


def gradient_growth_fit(phi, bg: BackgroundGeometry,
                        F1: float = 0.0) -> FitRecord:
    """Least-squares slope of log sup_x |grad phi_eps| against the log
    inverse divisor norm, compared with the closed-form exponent
    A1 = 2 eps (B + F1 + 1) (the reported bound is eps * A1 / 2)."""
    grid = bg.grid
    shifted = tsuji_shifted_values(phi, bg)
    inv_eps = bg.omega_eps().inv()
    beta = grad_norm_sq(inv_eps, reduced_gradient_field(grid, shifted))
    sup_grad = np.sqrt(np.maximum(beta, 1e-300)).max(axis=0)
    slope, intercept, rms = _slice_fit(np.log(sup_grad), bg)
    a1 = 2.0 * bg.epsilon * (bg.B + F1 + 1.0)
    return FitRecord(slope=slope, intercept=intercept, rms_residual=rms,
                     n_slices=grid.nt, bound=bg.epsilon * a1 / 2.0, F1=F1)


def laplacian_growth_fit(phi, bg: BackgroundGeometry) -> FitRecord:
    """Same fit for m + (regularized-trace) Laplacian of the weighted field.

    With a constant Monge-Ampere ratio the forcing input of the
    second-order exponent vanishes identically, so only the curvature
    bound inputs remain; no closed-form bound is attached.
    """
    grid = bg.grid
    shifted = tsuji_shifted_values(phi, bg)
    inv_eps = bg.omega_eps().inv()
    lap = contract_hessian(inv_eps, reduced_hessian_field(grid, shifted))
    profile = np.maximum((2.0 + lap), 1e-300).max(axis=0)
    slope, intercept, rms = _slice_fit(np.log(profile), bg)
    return FitRecord(slope=slope, intercept=intercept, rms_residual=rms,
                     n_slices=grid.nt)


def blocki_alpha_scan(phi, bg: BackgroundGeometry, s: float,
                      F1: float = 0.0) -> ScanRecord:
    """Interior and boundary maxima of the gradient scan functional
    alpha = log beta - gamma(phi_eps).

    Points with vanishing gradient are skipped and counted; the constant
    of the barrier weight is pinned by the field minimum so the weight is
    admissible on the whole range.
    """
    grid = bg.grid
    shifted = tsuji_shifted_values(phi, bg)
    inv_eps = bg.omega_eps().inv()
    beta = grad_norm_sq(inv_eps, reduced_gradient_field(grid, shifted))
    C = 1.0 - float(shifted.min())
    gval, _, _ = gamma_fn(shifted, (bg.B, F1, C))
    valid = beta > BETA_SKIP
    n_skipped = int((~valid).sum())
    if not valid.any():
        raise ValueError("all grid points skipped: gradient vanishes "
                         "identically")
    alpha = np.where(valid, np.log(np.maximum(beta, BETA_SKIP)), -np.inf) - gval
    interior = grid.interior_mask()
    a_int = np.where(interior & valid, alpha, -np.inf)
    flat = int(np.argmax(a_int))
    argmax = np.unravel_index(flat, grid.shape)
    boundary = ~interior
    a_bdy = np.where(boundary & valid, alpha, -np.inf)
    return ScanRecord(interior_max=float(a_int.max()),
                      interior_argmax=tuple(int(v) for v in argmax),
                      boundary_max=float(a_bdy.max()),
                      n_skipped=n_skipped,
                      extra={"C": C, "B": bg.B, "F1": F1, "s": s})


def default_trace_constant(bg: BackgroundGeometry) -> float:
    """Constant of the combined trace estimate, assembled from the model
    curvature bound inputs for a constant Monge-Ampere ratio."""
    return 1.0 + 2.0 * (bg.B + max(bg.b, 0.0))


def yau_aubin_scan(phi, bg: BackgroundGeometry, s: float,
                   A: float | None = None) -> ScanRecord:
    """Maximum of log Tr h - A phi_eps with h taken against the
    regularized background; reports Tr h^{-1} at the interior argmax,
    the maximum-principle consequence used by the second-order bound."""
    grid = bg.grid
    g_s = bg.omega_s(s).g
    gp = g_s + reduced_hessian_field(grid, phi)
    interior = grid.interior_mask()
    posdef = mf.min_eig(gp) > 0.0
    if not posdef[interior].any():
        raise PositivityError("perturbed form is not positive definite "
                              "anywhere on the interior")
    n_skipped = int((~posdef).sum())
    form_eps = bg.omega_eps()
    h = form_eps.inv() @ gp
    trh = mf.trace(h)
    if A is None:
        A = default_trace_constant(bg)
    shifted = tsuji_shifted_values(phi, bg)
    value = np.log(np.maximum(trh, 1e-300)) - A * shifted
    v_int = np.where(interior & posdef, value, -np.inf)
    flat = int(np.argmax(v_int))
    argmax = np.unravel_index(flat, grid.shape)
    trh_inv = float(mf.trace(mf.inv(h[argmax])))
    v_bdy = np.where(~interior & posdef, value, -np.inf)
    return ScanRecord(interior_max=float(v_int.max()),
                      interior_argmax=tuple(int(v) for v in argmax),
                      boundary_max=float(v_bdy.max()),
                      n_skipped=n_skipped,
                      extra={"A": A, "trace_h_inv_at_max": trh_inv, "s": s})


def boundary_c2_check(phi, bg: BackgroundGeometry, s: float, c_s: float,
                      n_factor: float = 2.0) -> BarrierCheck:
    """Flat-boundary second-order estimate and its barrier.

    Works on the shifted potential against the regularized background,
    where the equation has the constant ratio c_s (so the forcing gradient
    vanishes).  lhs is the boundary supremum of m + Lap psi = Tr h; rhs is
    C * sup_bdy(1 + |grad psi|^2) * sup_U(1 + |grad psi|^2) with

        C = m + sup F + 4 m (K + 2/delta)^2,

    K the collar supremum of the background-derivative size (plus the
    forcing gradient, zero here) and delta the collar radius where the
    normalized metric stays within a factor 2 of its boundary value.

    The barrier theta = C a psi + (a/delta)|z|^2 + C a (x - N x^2) - D psi
    is scanned over the collar of the boundary argmax for both signs of
    the tangential derivative; for admissible data (psi >= 0 vanishing on
    the outer boundary) its minimum sits above -O(h^2).
    """
    grid = bg.grid
    m = 2
    psi_field = shift_to_epsilon_background(
        phi if isinstance(phi, PotentialField) else
        PotentialField(grid, _values(phi)), bg, s)
    psi = psi_field.values
    form_eps = bg.omega_eps()
    inv_eps = form_eps.inv()
    gp = form_eps.g + reduced_hessian_field(grid, psi)
    trh = np.einsum("...jk,...jk->...", inv_eps, gp)

    lhs = float(trh[:, -1].max())
    i0 = int(np.argmax(trh[:, -1]))

    beta = grad_norm_sq(inv_eps, reduced_gradient_field(grid, psi))
    sup_f = c_s
    # collar: strip below t = 0 where the normalized metric is 2-comparable
    g22_0 = form_eps.g[i0, -1, 1, 1]
    lam_0 = form_eps.g[i0, -1, 0, 0]
    depth = grid.nt - 1
    for j in range(grid.nt - 2, -1, -1):
        ratio = form_eps.g[i0, j, 1, 1] / g22_0
        if not (0.5 <= ratio <= 2.0):
            depth = j + 1
            break
        depth = j
    n_lower = (2.0 * m * sup_f * 2.0 ** m) ** m
    n_value = n_factor * n_lower
    t_depth = -grid.t[depth]
    delta = min(g22_0 * t_depth ** 2 / 4.0 + 1e-30, 0.5 / max(n_value, 1e-30))
    delta = float(max(delta, g22_0 * grid.ht ** 2))

    # background-derivative size on the collar (forcing gradient is zero)
    a_w = grid.fiber_weight
    dg_mag = (np.abs(a_w * form_eps.dg_dx) + np.abs(form_eps.dg_dt)).sum(axis=(-2, -1))
    me = mf.min_eig(form_eps.g)
    K = float((dg_mag / me)[:, depth:].max())
    C = K + 2.0 / delta

    collar = np.zeros(grid.shape, dtype=bool)
    x_off = grid.x - grid.x[i0]
    if grid.periodic:
        width = grid.x_range[1] - grid.x_range[0]
        x_off = (x_off + width / 2) % width - width / 2
        re_off = x_off  # torus frame: Re z offset is x itself
    else:
        re_off = x_off / 2.0  # xi frame: Re xi = rho / 2
    x_hat = np.sqrt(g22_0) * (-grid.t) / 2.0
    z_sq = lam_0 * re_off[:, None] ** 2 + g22_0 * (grid.t[None, :] ** 2) / 4.0
    collar = z_sq <= delta

    d_tan = (2.0 * a_w) * d_x(grid, psi) / np.sqrt(lam_0)
    a_const = float(np.sqrt(2.0 * np.maximum(beta, 0.0))[collar].max()) + 1.0
    base = (C * a_const * psi + (a_const / delta) * z_sq
            + C * a_const * (x_hat - n_value * x_hat ** 2)[None, :])
    theta_min = float(min((base - d_tan)[collar].min(),
                          (base + d_tan)[collar].min()))

    sup_grad_bdy = float(np.sqrt(np.maximum(beta[:, -1], 0.0)).max())
    sup_grad_all = float(np.sqrt(np.maximum(beta, 0.0)).max())
    c_lemma = m + sup_f + 4.0 * m * C ** 2
    rhs = c_lemma * (1.0 + sup_grad_bdy ** 2) * (1.0 + sup_grad_all ** 2)
    return BarrierCheck(lhs=lhs, rhs=rhs, constant=c_lemma, sup_f=sup_f,
                        theta_min=theta_min, n_value=n_value, delta=delta,
                        collar_points=int(collar.sum()),
                        satisfied=bool(lhs <= rhs))


def compact_mask(bg: BackgroundGeometry, fraction: float = 0.5) -> np.ndarray:
    """Points of the designated compact subset t >= t_min * fraction."""
    grid = bg.grid
    keep = grid.t >= grid.t_min * fraction
    mask = np.zeros(grid.shape, dtype=bool)
    mask[:, keep] = True
    if not grid.periodic:
        mask[0, :] = False
        mask[-1, :] = False
    return mask


def grad_max_on_compact(phi, bg: BackgroundGeometry,
                        fraction: float = 0.5) -> float:
    inv_eps = bg.omega_eps().inv()
    beta = grad_norm_sq(inv_eps, reduced_gradient_field(bg.grid, phi))
    return float(np.sqrt(np.maximum(beta[compact_mask(bg, fraction)], 0.0)).max())


def full_report(phi, bg: BackgroundGeometry, s: float, c_s: float,
                hat: PotentialField | None = None,
                mass: float | None = None,
                with_barrier: bool = True) -> MonitorReport:
    """All monitors for one solved step (constant-ratio equation)."""
    rep = MonitorReport()
    rep.grad_fit = gradient_growth_fit(phi, bg, F1=0.0)
    rep.lap_fit = laplacian_growth_fit(phi, bg)
    rep.alpha_scan = blocki_alpha_scan(phi, bg, s, F1=0.0)
    rep.ya_scan = yau_aubin_scan(phi, bg, s)
    if hat is not None:
        vals = _values(phi)
        rep.sandwich = (float(vals.min()),
                        float((vals - hat.values).max()))
    rep.mass = mass
    if with_barrier:
        rep.boundary_c2 = boundary_c2_check(phi, bg, s, c_s)
    return rep


def slice_profiles(phi, bg: BackgroundGeometry, s: float) -> dict:
    """Plot-ready per-slice table: divisor norm, gradient and trace
    suprema, scan profile, and the mass density in t."""
    grid = bg.grid
    shifted = tsuji_shifted_values(phi, bg)
    inv_eps = bg.omega_eps().inv()
    beta = grad_norm_sq(inv_eps, reduced_gradient_field(grid, shifted))
    lap = contract_hessian(inv_eps, reduced_hessian_field(grid, shifted))
    C = 1.0 - float(shifted.min())
    gval, _, _ = gamma_fn(shifted, (bg.B, 0.0, C))
    alpha = np.where(beta > BETA_SKIP,
                     np.log(np.maximum(beta, BETA_SKIP)) - gval, -np.inf)
    g_s = bg.omega_s(s).g
    dets = mf.det(g_s + reduced_hessian_field(grid, phi))
    wx = np.full(grid.nx, grid.hx)
    if not grid.periodic:
        wx[0] *= 0.5
        wx[-1] *= 0.5
    return {
        "t": grid.t.copy(),
        "sigma_sq": np.exp(bg.log_sigma_sq(grid.t)),
        "sup_grad": np.sqrt(np.maximum(beta, 0.0)).max(axis=0),
        "sup_m_plus_lap": (2.0 + lap).max(axis=0),
        "alpha_max": alpha.max(axis=0),
        "mass_density": (dets * wx[:, None]).sum(axis=0),
    }
