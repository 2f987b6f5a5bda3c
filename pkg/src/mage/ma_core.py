"""Pointwise Monge-Ampere algebra and the exact differential identities.

Everything here operates on the reduced log-frame representation: a scalar
grid field phi(x, t) stands for an invariant function on the product
domain, its reduced (1,1) Hessian is the symmetric matrix field

    P(phi) = [[a^2 phi_xx, a phi_xt], [a phi_xt, phi_tt]],

and, given a background form g, the endomorphism h = g^{-1} (g + P(phi))
carries the Monge-Ampere data: det h is the equation ratio, the traces of
h and h^{-1} drive the second-order estimates.

Two classical identities are exposed with separately computed left and
right sides so that discretization consistency can be measured:

* the gradient identity (Blocki): for alpha = log |grad phi|^2_g - gamma(phi),

    Lap' alpha = (1/beta) [ |DD phi|^2 + |DbD phi|^2 + 2 Re <d log F, d phi>
                  + curvature term ]
                 - |d beta|^2_{g'} / beta^2 - gamma'' |d phi|^2_{g'}
                 - gamma' Lap' phi,

  valid whenever det(g + P(phi)) = F det g holds for the supplied F;

* the trace identity (Yau-Aubin):

    Lap' log Tr h = (-R + Lap log F + Riem contraction) / Tr h
                    + [ (g')^{pq} Tr(D'_p h h^{-1} D'_q h) / Tr h
                        - |D' Tr h|^2_{g'} / (Tr h)^2 ],

  whose bracket is the nonnegative Cauchy-Schwarz quantity.

Covariant derivatives are taken with respect to the stated background;
mixed second covariant derivatives of scalars equal partials, so both
Laplacians are plain inverse-metric contractions of finite-difference
Hessians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matfield as mf
from .errors import PositivityError
from .geometry import BackgroundGeometry, FamilyForm
from .grid import ReducedGrid, d_t, d_x, d_xt, d_xx, d_tt

BETA_FLOOR = 1e-14


def _values(phi) -> np.ndarray:
    return phi.values if hasattr(phi, "values") else np.asarray(phi, dtype=float)


def reduced_hessian_field(grid: ReducedGrid, phi) -> np.ndarray:
    """Reduced complex Hessian of an invariant potential, shape (nx, nt, 2, 2).

    Entries use centered differences in the interior and second-order
    one-sided stencils on non-periodic edges; callers that require strict
    interior consistency should mask with ``grid.interior_mask()``.
    """
    f = _values(phi)
    a = grid.fiber_weight
    return mf.mat(a * a * d_xx(grid, f), a * d_xt(grid, f), d_tt(grid, f))


def reduced_hessian(phi, grid: ReducedGrid, point: tuple[int, int]) -> np.ndarray:
    """Reduced complex Hessian at one interior grid point.

    Raises
    ------
    IndexError
        If the point touches a non-periodic edge (no centered stencil).
    """
    if not grid.is_interior(point):
        raise IndexError(f"point {point} is not interior; centered stencil "
                         "unavailable")
    return reduced_hessian_field(grid, phi)[point]


def reduced_gradient_field(grid: ReducedGrid, phi) -> np.ndarray:
    """Holomorphic-frame gradient (a f_x, f_t), shape (nx, nt, 2)."""
    f = _values(phi)
    return np.stack([grid.fiber_weight * d_x(grid, f), d_t(grid, f)], axis=-1)


def grad_norm_sq(invg: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """|grad|^2 in the metric with inverse invg."""
    return np.einsum("...jk,...j,...k->...", invg, grad, grad)


def contract_hessian(invg: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Inverse-metric trace of a symmetric Hessian field (a Laplacian)."""
    return np.einsum("...jk,...jk->...", invg, hess)


# -- endomorphism pairs ----------------------------------------------------

@dataclass
class HermitianPair:
    """Background metric g, perturbed metric g' and endomorphism h = g^{-1}g'
    at one point (general m x m)."""

    g: np.ndarray
    g_prime: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        self.g_prime = np.asarray(self.g_prime, dtype=float)
        if not mf.is_posdef(self.g):
            raise PositivityError("background metric is not positive definite")
        self.h = mf.inv(self.g) @ self.g_prime

    @property
    def m(self) -> int:
        return self.g.shape[-1]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of h (real, ascending)."""
        return mf.eigvals_pair(self.g, self.g_prime)

    @property
    def det_h(self) -> float:
        return float(mf.det(self.h))

    @property
    def trace_h(self) -> float:
        return float(mf.trace(self.h))

    @property
    def trace_h_inv(self) -> float:
        return float(mf.trace(mf.inv(self.h)))

    @property
    def posdef(self) -> bool:
        return mf.is_posdef(self.g_prime)


@dataclass
class PairField:
    """Grid field of endomorphism pairs for one background form."""

    form: FamilyForm
    hess: np.ndarray      # reduced Hessian of the potential
    g: np.ndarray
    g_prime: np.ndarray
    h: np.ndarray

    @property
    def grid(self) -> ReducedGrid:
        return self.form.bg.grid

    def det_h(self) -> np.ndarray:
        return mf.det(self.g_prime) / mf.det(self.g)

    def trace_h(self) -> np.ndarray:
        return mf.trace(self.h)

    def trace_h_inv(self) -> np.ndarray:
        return mf.trace(mf.inv(self.h))

    def min_eig_prime(self) -> np.ndarray:
        return mf.min_eig(self.g_prime)

    def posdef_interior(self, floor: float = 0.0) -> bool:
        mask = self.grid.interior_mask()
        return bool(np.all(self.min_eig_prime()[mask] > floor))

    def at(self, point: tuple[int, int]) -> HermitianPair:
        return HermitianPair(self.g[point], self.g_prime[point])


def assemble_pair_field(bg: BackgroundGeometry, s: float, phi,
                        use_eps_background: bool = False) -> PairField:
    """Assemble g from the family form (or from the regularized form) and
    g' = g + reduced Hessian of phi over the whole grid."""
    form = bg.omega_eps() if use_eps_background else bg.omega_s(s)
    hess = reduced_hessian_field(bg.grid, phi)
    g_prime = form.g + hess
    h = mf.inv(form.g) @ g_prime
    return PairField(form=form, hess=hess, g=form.g, g_prime=g_prime, h=h)


def assemble_pair(bg: BackgroundGeometry, s: float, phi,
                  point: tuple[int, int],
                  use_eps_background: bool = False) -> HermitianPair:
    """Endomorphism pair at one interior point.

    Raises PositivityError when the background metric is degenerate there
    (for instance s = 0 with a fiber-pullback background).
    """
    if not bg.grid.is_interior(point):
        raise IndexError(f"point {point} is not interior")
    field = assemble_pair_field(bg, s, phi, use_eps_background)
    return field.at(point)


def laplacian_prime(pair: HermitianPair, f_hessian: np.ndarray) -> float:
    """(g')^{jk} f_{jk}; applied to the pair's own potential it equals
    m - Tr h^{-1} identically."""
    gp = pair.g_prime
    if not mf.is_posdef(gp):
        raise PositivityError("perturbed metric is not positive definite")
    return float(contract_hessian(mf.inv(gp), np.asarray(f_hessian, dtype=float)))


# -- the gamma weight ------------------------------------------------------

def gamma_fn(x, params):
    """Barrier weight gamma(x) = (B + F1 + 1) x - 1/(x + C) and derivatives.

    Defined for x > -C; the intended range is x >= -C + 1 where the slope
    exceeds B + F1 + 1 and the curvature is negative.

    Parameters
    ----------
    x : float or ndarray
    params : (B, F1, C)

    Returns
    -------
    (value, first, second) : floats or ndarrays
    """
    B, F1, C = params
    x = np.asarray(x, dtype=float)
    shifted = x + C
    if np.any(shifted <= 0.0):
        raise ValueError("gamma weight evaluated at or below its pole x = -C")
    slope = B + F1 + 1.0
    value = slope * x - 1.0 / shifted
    first = slope + shifted ** -2
    second = -2.0 * shifted ** -3
    if value.ndim == 0:
        return float(value), float(first), float(second)
    return value, first, second


@dataclass
class BlockiData:
    """Per-field gradient data entering the maximum-principle scan."""

    beta: np.ndarray       # |grad phi|^2 in the background metric
    alpha: np.ndarray      # log beta - gamma(phi), nan where beta ~ 0
    gamma_params: tuple
    F1: float

    @property
    def valid(self) -> np.ndarray:
        return self.beta > BETA_FLOOR


def blocki_data_field(grid: ReducedGrid, phi, invg: np.ndarray,
                      gamma_params, F1: float | None = None) -> BlockiData:
    beta = grad_norm_sq(invg, reduced_gradient_field(grid, phi))
    gval, _, _ = gamma_fn(_values(phi), gamma_params)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(beta > BETA_FLOOR, np.log(np.maximum(beta, BETA_FLOOR)),
                         np.nan) - gval
    return BlockiData(beta=beta, alpha=alpha, gamma_params=gamma_params,
                      F1=gamma_params[1] if F1 is None else F1)


# -- shared assembly helpers ------------------------------------------------

def _log_f_field(grid: ReducedGrid, log_F) -> np.ndarray:
    if np.isscalar(log_F) or np.ndim(log_F) == 0:
        return np.full(grid.shape, float(log_F))
    arr = np.asarray(log_F, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError("log_F field shape does not match the grid")
    return arr


def _partials_of_matrix(grid: ReducedGrid, mfield: np.ndarray) -> np.ndarray:
    """Holomorphic-frame partials of a matrix field: out[..., p, q, m]."""
    a = grid.fiber_weight
    dx = np.empty_like(mfield)
    dt = np.empty_like(mfield)
    for q in range(2):
        for m in range(2):
            dx[..., q, m] = a * d_x(grid, mfield[..., q, m])
            dt[..., q, m] = d_t(grid, mfield[..., q, m])
    return np.stack([dx, dt], axis=-3)


def christoffel_field(invg: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^l_{jm} = g^{lq} (d_j g)_{qm}; dg indexed [..., j, q, m]."""
    return np.einsum("...lq,...jqm->...ljm", invg, dg)


def _background_partials(form: FamilyForm) -> np.ndarray:
    a = form.bg.grid.fiber_weight
    return np.stack([a * form.dg_dx, form.dg_dt], axis=-3)


def _curvature_blocki_term(form, invg, invgp, grad):
    """(g')^{kl} d_p phi R^p_k_l^m d_m phi for a product background."""
    r1, r2 = form.curvature_arrays()
    if not np.any(r1) and not np.any(r2):
        return np.zeros(invg.shape[:-2])
    out = np.zeros(invg.shape[:-2])
    for d, rm in ((0, r1), (1, r2)):
        out += invgp[..., d, d] * grad[..., d] ** 2 * invg[..., d, d] ** 2 * rm
    return out


def _curvature_yau_term(form, invg, h, hinv):
    """(h^{-1})^p_m R^m_p^j_k h^k_j for a product background."""
    r1, r2 = form.curvature_arrays()
    if not np.any(r1) and not np.any(r2):
        return np.zeros(invg.shape[:-2])
    out = np.zeros(invg.shape[:-2])
    for d, rm in ((0, r1), (1, r2)):
        out += hinv[..., d, d] * h[..., d, d] * invg[..., d, d] ** 2 * rm
    return out


# -- the gradient identity ---------------------------------------------------

def blocki_sides_field(phi, bg: BackgroundGeometry, s: float, gamma_params,
                       log_F, use_eps_background: bool = False):
    """Both sides of the gradient identity over the grid.

    Parameters
    ----------
    phi : field or PotentialField
        The potential the identity is applied to (already shifted, if the
        caller works with the divisor-weighted field).
    log_F : scalar or field
        Logarithm of the Monge-Ampere ratio the potential satisfies; the
        two sides agree (up to discretization) only when
        det(g + P(phi)) = F det g holds.
    gamma_params : (B, F1, C)

    Returns
    -------
    lhs, rhs : ndarray
        Lap' alpha by nested finite differences, and the assembled right
        side.
    mask : ndarray of bool
        Points where both sides are meaningful: two stencil layers from
        edges, beta above floor, g' positive definite.
    """
    grid = bg.grid
    pair = assemble_pair_field(bg, s, phi, use_eps_background)
    form = pair.form
    invg = mf.inv(pair.g)
    posdef = pair.min_eig_prime() > 0.0
    gp_safe = np.where(posdef[..., None, None], pair.g_prime,
                       np.eye(2)[None, None])
    invgp = mf.inv(gp_safe)

    grad = reduced_gradient_field(grid, phi)
    beta = grad_norm_sq(invg, grad)
    phi_v = _values(phi)
    gval, g1, g2 = gamma_fn(phi_v, gamma_params)

    ok = posdef & (beta > BETA_FLOOR) & grid.interior_mask(2)
    safe_beta = np.maximum(beta, BETA_FLOOR)
    alpha = np.log(safe_beta) - gval
    lhs = contract_hessian(invgp, reduced_hessian_field(grid, alpha))

    # covariant (2,0) Hessian: partials minus background Christoffels
    hess = pair.hess
    gam = christoffel_field(invg, _background_partials(form))
    s20 = hess - np.einsum("...ljm,...l->...jm", gam, grad)
    t_holo = np.einsum("...jk,...mp,...jm,...kp->...", invgp, invg, s20, s20)
    t_mixed = np.einsum("...jk,...mp,...jp,...mk->...", invgp, invg, hess, hess)

    logf = _log_f_field(grid, log_F)
    grad_logf = reduced_gradient_field(grid, logf)
    t_force = 2.0 * np.einsum("...jk,...j,...k->...", invg, grad_logf, grad)
    t_curv = _curvature_blocki_term(form, invg, invgp, grad)

    grad_beta = reduced_gradient_field(grid, beta)
    lap_prime_phi = contract_hessian(invgp, hess)
    rhs = ((t_holo + t_mixed + t_force + t_curv) / safe_beta
           - grad_norm_sq(invgp, grad_beta) / safe_beta ** 2
           - g2 * grad_norm_sq(invgp, grad)
           - g1 * lap_prime_phi)
    return lhs, rhs, ok


def blocki_sides(phi, bg: BackgroundGeometry, s: float,
                 point: tuple[int, int], gamma_params, log_F,
                 use_eps_background: bool = False) -> tuple[float, float]:
    """Gradient-identity sides at one interior point.

    Raises
    ------
    ValueError
        If beta vanishes at the point (alpha undefined) or the point is
        too close to an edge.
    PositivityError
        If g' is not positive definite there.
    """
    lhs, rhs, ok = blocki_sides_field(phi, bg, s, gamma_params, log_F,
                                      use_eps_background)
    if not bg.grid.is_interior(point, pad=2):
        raise ValueError(f"point {point} lacks the nested stencil margin")
    if not ok[point]:
        pair = assemble_pair(bg, s, phi, point, use_eps_background)
        if not pair.posdef:
            raise PositivityError("g' is not positive definite at the point")
        raise ValueError("gradient norm vanishes at the point; "
                         "alpha is undefined")
    return float(lhs[point]), float(rhs[point])


def blocki_critical_rhs(pair: HermitianPair, beta: float, grad_prime_sq: float,
                        gamma_d1: float, gamma_d2: float, B: float,
                        F1: float) -> float:
    """Lower bound for Lap' alpha at an interior critical point of alpha:
    the simplified inequality with the mixed-Hessian term dropped."""
    m = pair.m
    tr_hinv = pair.trace_h_inv
    return ((gamma_d1 - B - F1 / np.sqrt(beta)) * tr_hinv
            + (-gamma_d2 + 2.0 * gamma_d1 / beta) * grad_prime_sq
            - (m + 2.0) * gamma_d1 - 2.0 / beta)


# -- the trace identity ------------------------------------------------------

def yau_aubin_sides_field(phi, bg: BackgroundGeometry, s: float, log_F,
                          use_eps_background: bool = False):
    """Both sides of the trace identity and the Cauchy-Schwarz bracket.

    Returns (lhs, rhs, basic_ineq, mask); the bracket `basic_ineq` is the
    nonnegative quantity whose positivity is sampled independently by
    :func:`basic_inequality_bracket`.
    """
    grid = bg.grid
    pair = assemble_pair_field(bg, s, phi, use_eps_background)
    invg = mf.inv(pair.g)
    posdef = pair.min_eig_prime() > 0.0
    gp_safe = np.where(posdef[..., None, None], pair.g_prime,
                       np.eye(2)[None, None])
    invgp = mf.inv(gp_safe)
    h = pair.h
    trh = mf.trace(h)
    ok = posdef & (trh > 0.0) & grid.interior_mask(2)

    log_trh = np.log(np.where(trh > 0.0, trh, 1.0))
    lhs = contract_hessian(invgp, reduced_hessian_field(grid, log_trh))

    logf = _log_f_field(grid, log_F)
    lap_logf = contract_hessian(invg, reduced_hessian_field(grid, logf))
    if pair.form.bg.curvature_kind == "unavailable":
        raise ValueError("trace identity needs a background with "
                         "closed-form curvature")
    scal = pair.form.scalar_curvature()
    hinv = mf.inv(np.where(posdef[..., None, None], h, np.eye(2)[None, None]))
    q_curv = _curvature_yau_term(pair.form, invg, h, hinv)

    dgp = _background_partials(pair.form) + _partials_of_matrix(grid, pair.hess)
    gam_p = np.einsum("...lq,...pqm->...plm", invgp, dgp)
    dh = _partials_of_matrix(grid, h)
    # D'_p h^j_k = d_p h^j_k + Gam'^j_{pl} h^l_k - Gam'^l_{pk} h^j_l
    cov_dh = (dh + np.einsum("...pjl,...lk->...pjk", gam_p, h)
              - np.einsum("...plk,...jl->...pjk", gam_p, h))
    # conjugate-direction derivative of h: plain partials in the real frame
    bracket_num = np.einsum("...pq,...pjl,...lr,...qrj->...",
                            invgp, cov_dh, hinv, dh)
    safe_trh = np.where(trh > 0.0, trh, 1.0)
    grad_trh = reduced_gradient_field(grid, trh)
    basic = bracket_num / safe_trh - grad_norm_sq(invgp, grad_trh) / safe_trh ** 2

    rhs = (-scal + lap_logf + q_curv) / safe_trh + basic
    return lhs, rhs, basic, ok


def yau_aubin_sides(phi, bg: BackgroundGeometry, s: float,
                    point: tuple[int, int], A: float, log_F,
                    use_eps_background: bool = False):
    """Trace-identity sides at one point plus the maximum-principle
    combination Lap'(log Tr h - A phi) and its lower bound (A/2)Tr h^{-1} - mA.

    Returns
    -------
    (lhs, rhs, basic_ineq) : floats
    """
    lhs, rhs, basic, ok = yau_aubin_sides_field(phi, bg, s, log_F,
                                                use_eps_background)
    if not ok[point]:
        pair = assemble_pair(bg, s, phi, point, use_eps_background)
        if not pair.posdef:
            raise PositivityError("g' is not positive definite at the point")
        raise ValueError("Tr h is not positive at the point")
    return float(lhs[point]), float(rhs[point]), float(basic[point])


def basic_inequality_bracket(g_prime: np.ndarray, h: np.ndarray,
                             dh: np.ndarray, dh_bar: np.ndarray) -> float:
    """The Cauchy-Schwarz bracket of the trace identity on raw samples.

    Parameters
    ----------
    g_prime : (m, m) positive matrix (used through its inverse).
    h : (m, m) positive endomorphism.
    dh : (k, m, m) holomorphic-direction derivatives of h.
    dh_bar : (k, m, m) conjugate-direction derivatives (adjoints of dh in
        an orthonormal frame).

    Returns
    -------
    float
        Tr-weighted quantity, nonnegative for consistent inputs.
    """
    invgp = np.linalg.inv(g_prime)
    hinv = np.linalg.inv(h)
    trh = np.trace(h).real
    num = np.einsum("pq,pjl,lr,qrj->", invgp, dh, hinv, dh_bar).real
    tr_dh = np.einsum("pjj->p", dh)
    grad_sq = np.einsum("pq,p,q->", invgp, tr_dh, np.conj(tr_dh)).real
    return num / trh - grad_sq / trh ** 2


def basic_inequality_samples(n: int, rng: np.random.Generator,
                             m: int = 2) -> np.ndarray:
    """Vectorized sampling of the bracket over random positive data.

    Samples are drawn in a g-orthonormal frame (no loss of generality for
    the tensor inequality): h positive definite, derivative slots
    arbitrary complex with the conjugate slot the Hermitian adjoint.
    """
    a = rng.standard_normal((n, m, m)) + 1j * rng.standard_normal((n, m, m))
    h = a @ np.conj(np.swapaxes(a, -1, -2))
    h += np.eye(m) * 1e-6
    dh = rng.standard_normal((n, m, m, m)) + 1j * rng.standard_normal((n, m, m, m))
    dh_bar = np.conj(np.swapaxes(dh, -1, -2))
    invgp = np.linalg.inv(h)  # orthonormal frame: g' = h
    hinv = invgp
    trh = np.einsum("njj->n", h).real
    num = np.einsum("npq,npjl,nlr,nqrj->n", invgp, dh, hinv, dh_bar).real
    tr_dh = np.einsum("npjj->np", dh)
    grad_sq = np.einsum("npq,np,nq->n", invgp, tr_dh, np.conj(tr_dh)).real
    return num / trh - grad_sq / trh ** 2
