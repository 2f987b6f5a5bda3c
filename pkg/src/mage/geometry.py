"""Background geometry of the reduced domain.

Builds the non-negative background form, its Kahler regularization, the
interpolating family used by the continuation, the divisor norm profile,
and the glued test-configuration model form.

Conventions (log frame, see :mod:`mage.grid`): a (1,1)-form is stored as a
symmetric 2x2 coefficient field ``g`` over the grid, together with the
entrywise derivative fields ``dg_dx`` and ``dg_dt`` (analytic, used for
Christoffel symbols in identity checks).  The regularization potential is
a function of t only, so the Kahler form obtained from the non-negative
background is

    g_eps = g0 + diag(0, r''(t)),

and the interpolating family at parameter s is ``g_s = g0 + s diag(0, r'')``,
which equals ``(1-s) g0 + s g_eps`` pointwise.

The divisor sits at t -> -infinity (the central fiber); its norm profile is
tied to the regularization metric by ``log |sigma|^2 = t + r(t)/eps`` so
that the weighted shift of a potential changes the background form exactly
from ``g_s`` to ``g_eps``.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field

import numpy as np

from . import matfield as mf
from .errors import PositivityError
from .grid import ReducedGrid, TRUNCATED_RHO

CURVATURE_FLAT = "flat"
CURVATURE_P1_PRODUCT = "p1_product"
CURVATURE_UNAVAILABLE = "unavailable"


class RegPotential:
    """Regularization potential r(t) = eps * log H(t), a function of t only.

    Subclasses provide the value and its first three t-derivatives as
    vectorized callables.  ``d2`` is the coefficient the potential adds to
    the base-base entry of the regularized form and must be positive.
    """

    def value(self, t):
        raise NotImplementedError

    def d1(self, t):
        raise NotImplementedError

    def d2(self, t):
        raise NotImplementedError

    def d3(self, t):
        raise NotImplementedError


class ExpReg(RegPotential):
    """Default profile r(t) = eps * kappa * (e^t - 1).

    Normalized so r(0) = 0, hence the divisor norm equals 1 on the outer
    boundary.  The base-base contribution is eps*kappa*e^t, a flat metric
    on the annulus (zero curvature).
    """

    def __init__(self, eps: float, kappa: float):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.eps = eps
        self.kappa = kappa

    def value(self, t):
        return self.eps * self.kappa * np.expm1(t)

    def d1(self, t):
        return self.eps * self.kappa * np.exp(t)

    d2 = d1
    d3 = d1


class QuadReg(RegPotential):
    """Profile r(t) = c t^2 / 2 with constant base-base contribution c.

    Useful for constant-coefficient checks where the barrier solve has a
    closed-form quadratic solution.
    """

    def __init__(self, c: float):
        if c <= 0:
            raise ValueError("c must be positive")
        self.c = c

    def value(self, t):
        return 0.5 * self.c * np.asarray(t, dtype=float) ** 2

    def d1(self, t):
        return self.c * np.asarray(t, dtype=float)

    def d2(self, t):
        return self.c * np.ones_like(np.asarray(t, dtype=float))

    def d3(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass
class BackgroundGeometry:
    """Grid samples of the background form and its regularization data.

    Attributes
    ----------
    grid : ReducedGrid
    lam : ndarray, shape (nx,)
        Fiber coefficient of the boundary restriction of the background
        form (the fiber metric at t = 0); must be positive.
    g0 : ndarray, shape (nx, nt, 2, 2)
        Coefficients of the non-negative background form.
    dg0_dx, dg0_dt : ndarray
        Entrywise analytic derivatives of g0.
    epsilon : float
        Divisor weight in (0, 1].
    reg : RegPotential
    B : float
        Lower bisectional-curvature bound input (the bound is -B), with
        B * epsilon > 1 enforced.
    b : float
        Upper scalar-curvature bound input, >= 0.
    kappa : float or None
        Scale of the default regularization profile, None for custom ones.
    curvature_kind : str
        "flat", "p1_product", or "unavailable"; identity checks that need
        curvature terms accept the first two.
    """

    grid: ReducedGrid
    lam: np.ndarray
    g0: np.ndarray
    dg0_dx: np.ndarray
    dg0_dt: np.ndarray
    epsilon: float
    reg: RegPotential
    B: float
    b: float
    kappa: float | None = None
    curvature_kind: str = CURVATURE_UNAVAILABLE

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in (0, 1]")
        if self.B * self.epsilon <= 1.0:
            raise ValueError("the curvature input must satisfy B * epsilon > 1")
        if self.b < 0.0:
            raise ValueError("b must be >= 0")
        if np.any(self.lam <= 0.0):
            raise PositivityError("fiber coefficient must be positive")
        floor = mf.min_eig(self.omega_eps().g).min()
        if not floor > 0.0:
            raise PositivityError(
                f"regularized form is not positive definite (min eigenvalue {floor:g})")

    # -- family forms ------------------------------------------------------

    def omega_s(self, s: float) -> "FamilyForm":
        return build_omega_s(self, s)

    def omega_eps(self) -> "FamilyForm":
        """The Kahler regularization, i.e. the family form at s = 1."""
        return build_omega_s(self, 1.0)

    # -- divisor profile ---------------------------------------------------

    def log_sigma_sq(self, t):
        """log of the squared divisor norm, t + r(t)/eps."""
        return np.asarray(t, dtype=float) + self.reg.value(t) / self.epsilon

    def d_log_sigma_sq(self, t):
        return 1.0 + self.reg.d1(t) / self.epsilon

    def reg_on_grid(self) -> np.ndarray:
        """r(t) broadcast over the grid, shape (nx, nt)."""
        return np.broadcast_to(self.reg.value(self.grid.t), self.grid.shape)


@dataclass
class FamilyForm:
    """Coefficients of the interpolating form at parameter s.

    ``g`` equals ``(1-s) g0 + s g_eps`` pointwise; for s > 0 it is positive
    definite, while at s = 0 the base direction may degenerate.
    """

    s: float
    g: np.ndarray
    dg_dx: np.ndarray
    dg_dt: np.ndarray
    bg: BackgroundGeometry = field(repr=False)

    def inv(self) -> np.ndarray:
        return mf.inv(self.g)

    def det(self) -> np.ndarray:
        return mf.det(self.g)

    def min_eig(self) -> np.ndarray:
        return mf.min_eig(self.g)

    def curvature_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Pure Riemann components (R_{1b11b1}, R_{2b22b2}) of this form.

        Only product-model backgrounds carry closed-form curvature; the
        base direction of the default regularization profile is flat.
        """
        kind = self.bg.curvature_kind
        shape = self.bg.grid.shape
        if kind == CURVATURE_FLAT:
            return np.zeros(shape), np.zeros(shape)
        if kind == CURVATURE_P1_PRODUCT:
            # fiber metric sig'(rho): R_{1b11b1} = -lam (log lam)_rr = 2 lam^2
            r_f = 2.0 * self.g[..., 0, 0] ** 2
            return r_f, np.zeros(shape)
        raise ValueError(
            "closed-form curvature is not available for this background")

    def scalar_curvature(self) -> np.ndarray:
        r1, r2 = self.curvature_arrays()
        invg = self.inv()
        return invg[..., 0, 0] ** 2 * r1 + invg[..., 1, 1] ** 2 * r2


def build_omega_s(bg: BackgroundGeometry, s: float) -> FamilyForm:
    """Interpolating form g0 + s * diag(0, r'') at parameter s in [0, 1].

    Raises
    ------
    ValueError
        If s lies outside [0, 1].
    PositivityError
        If s > 0 and the assembled form is not positive definite at every
        grid point (an inconsistent background).
    """
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"family parameter s = {s} outside [0, 1]")
    grid = bg.grid
    r2 = np.broadcast_to(bg.reg.d2(grid.t), grid.shape)
    r3 = np.broadcast_to(bg.reg.d3(grid.t), grid.shape)
    g = bg.g0.copy()
    g[..., 1, 1] = g[..., 1, 1] + s * r2
    dg_dt = bg.dg0_dt.copy()
    dg_dt[..., 1, 1] = dg_dt[..., 1, 1] + s * r3
    form = FamilyForm(s=s, g=g, dg_dx=bg.dg0_dx.copy(), dg_dt=dg_dt, bg=bg)
    if s > 0.0:
        floor = form.min_eig().min()
        if not floor > 0.0:
            raise PositivityError(
                f"form at s = {s} has min eigenvalue {floor:g} <= 0; "
                "background data is inconsistent")
    return form


def divisor_norm(bg: BackgroundGeometry, t) -> float | np.ndarray:
    """Squared norm of the canonical divisor section at height t <= 0.

    Positive for every finite t, strictly increasing, and tending to 0 as
    t -> -infinity; equals 1 at the outer boundary for the default profile.
    """
    return np.exp(bg.log_sigma_sq(t))


# -- model backgrounds -----------------------------------------------------

def _fiber_pullback_bg(grid, lam, epsilon, kappa, B, b, curvature_kind):
    nx, nt = grid.shape
    g0 = np.zeros((nx, nt, 2, 2))
    g0[..., 0, 0] = lam[:, None]
    dg0_dx = np.zeros_like(g0)
    dg0_dx[..., 0, 0] = _centered_x(grid, lam)[:, None]
    dg0_dt = np.zeros_like(g0)
    if kappa is None:
        kappa = default_kappa(grid, lam, epsilon)
    reg = ExpReg(epsilon, kappa)
    if B is None:
        B = 2.0 / epsilon
    return BackgroundGeometry(grid=grid, lam=lam, g0=g0, dg0_dx=dg0_dx,
                              dg0_dt=dg0_dt, epsilon=epsilon, reg=reg,
                              B=B, b=b, kappa=kappa,
                              curvature_kind=curvature_kind)


def _centered_x(grid, values):
    if np.ptp(values) == 0.0:
        return np.zeros_like(values)
    if grid.periodic:
        return (np.roll(values, -1) - np.roll(values, 1)) / (2 * grid.hx)
    out = np.gradient(values, grid.hx)
    return out


def default_kappa(grid: ReducedGrid, lam: np.ndarray, epsilon: float) -> float:
    """Smallest scale of the default profile keeping the regularized form
    uniformly elliptic: min eigenvalue of g_eps >= 0.1 * min(lam)."""
    return 0.1 * float(lam.min()) * np.exp(-grid.t_min) / epsilon


def flat_torus_background(grid: ReducedGrid, lam=1.0, epsilon: float = 0.5,
                          kappa: float | None = None, B: float | None = None,
                          b: float = 0.0) -> BackgroundGeometry:
    """Flat-torus fiber pullback background.

    `lam` may be a positive constant or a callable of x.  With constant lam
    the regularized form is flat and all curvature terms in the identities
    vanish exactly.
    """
    if callable(lam):
        lam_arr = np.asarray(lam(grid.x), dtype=float)
        kind = CURVATURE_UNAVAILABLE
    else:
        lam_arr = np.full(grid.nx, float(lam))
        kind = CURVATURE_FLAT
    return _fiber_pullback_bg(grid, lam_arr, epsilon, kappa, B, b, kind)


def sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=float)))


def softplus(u):
    u = np.asarray(u, dtype=float)
    return np.logaddexp(0.0, u)


def p1_model_background(grid: ReducedGrid, epsilon: float = 0.5,
                        kappa: float | None = None, B: float | None = None,
                        b: float = 2.0) -> BackgroundGeometry:
    """P^1-model fiber pullback: Fubini-Study fiber metric in the rho frame.

    The fiber coefficient is sig'(rho) = e^rho / (1 + e^rho)^2, the
    curvature of the potential log(1 + e^rho); its holomorphic sectional
    curvature is the constant 2.
    """
    if grid.fiber_kind != TRUNCATED_RHO:
        raise ValueError("P^1 model requires a truncated_rho grid")
    s = sigmoid(grid.x)
    lam_arr = s * (1.0 - s)
    bg = _fiber_pullback_bg(grid, lam_arr, epsilon, kappa, B, b,
                            CURVATURE_P1_PRODUCT)
    # analytic x-derivative of the fiber coefficient
    bg.dg0_dx[..., 0, 0] = (lam_arr * (1.0 - 2.0 * s))[:, None]
    return bg


# -- test-configuration model ---------------------------------------------

@dataclass(frozen=True)
class TestConfigModel:
    """Parameters of the product test-configuration gluing.

    weight_a is the C*-action exponent; eta_radii are the cutoff radii in
    |w| (inner radius where the pulled-back metric takes over, outer where
    the boundary fiber metric does); alpha_h is the gluing exponent of the
    base factor; k sets the divisor weight epsilon = 1/k.
    """

    weight_a: int = 1
    eta_radii: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0)
    alpha_h: float = 4.0
    k: int = 2

    def __post_init__(self):
        if self.weight_a < 0 or int(self.weight_a) != self.weight_a:
            raise ValueError("weight_a must be a nonnegative integer")
        r0, r1 = self.eta_radii
        if not (0.0 < r0 < r1 < 1.0):
            raise ValueError("eta radii must satisfy 0 < r0 < r1 < 1")
        if self.alpha_h <= 0.0:
            raise ValueError("alpha_h must be positive")
        if self.k < 1:
            raise ValueError("k must be a positive integer")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.k


def _smoothstep3(u):
    """Septic smoothstep on [0, 1] with three vanishing derivatives at the
    endpoints; returns (value, d1, d2, d3)."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    v = 35 * u**4 - 84 * u**5 + 70 * u**6 - 20 * u**7
    d1 = 140 * u**3 - 420 * u**4 + 420 * u**5 - 140 * u**6
    d2 = 420 * u**2 - 1680 * u**3 + 2100 * u**4 - 840 * u**5
    d3 = 840 * u - 5040 * u**2 + 8400 * u**3 - 4200 * u**4
    return v, d1, d2, d3


def _eta_cutoff(t, radii):
    """Radial cutoff as a function of t = log|w|^2: 1 inside the inner
    radius, 0 outside the outer one; returns eta and three t-derivatives."""
    t = np.asarray(t, dtype=float)
    t_in = 2.0 * np.log(radii[0])   # eta = 1 for t <= t_in
    t_out = 2.0 * np.log(radii[1])  # eta = 0 for t >= t_out
    u = (t_out - t) / (t_out - t_in)
    v, d1, d2, d3 = _smoothstep3(u)
    du = -1.0 / (t_out - t_in)
    inside = (u > 0.0) & (u < 1.0)
    z = np.zeros_like(t)
    return (v,
            np.where(inside, d1 * du, z),
            np.where(inside, d2 * du**2, z),
            np.where(inside, d3 * du**3, z))


def required_alpha(model: TestConfigModel, grid: ReducedGrid) -> float:
    """Smallest gluing exponent making the glued form positive definite on
    the grid (up to the strict inequality)."""
    p = _test_config_entries(model, grid, alpha=0.0)
    # alpha enters the base entry as alpha * e^t
    need = (p["g12"] ** 2 / p["g11"] - p["g22"]) * np.exp(-grid.t[None, :])
    return float(need.max())


def _test_config_entries(model: TestConfigModel, grid: ReducedGrid, alpha: float):
    """Coefficient entries of the glued potential and their derivatives."""
    a = float(model.weight_a)
    x = grid.x[:, None]
    t = grid.t[None, :]
    sig_r = sigmoid(x)
    lam_r = sig_r * (1.0 - sig_r)
    lam_r_d = lam_r * (1.0 - 2.0 * sig_r)
    arg = x + a * t
    s0 = sigmoid(arg)
    s1 = s0 * (1.0 - s0)
    s2 = s1 * (1.0 - 2.0 * s0)
    et = np.exp(t)
    eta, eta1, eta2, eta3 = _eta_cutoff(grid.t, model.eta_radii)
    eta, eta1, eta2, eta3 = (np.broadcast_to(v, grid.shape)
                             for v in (eta, eta1, eta2, eta3))
    # gluing potential relative to the boundary fiber metric
    psi = softplus(arg) - softplus(x) + et
    psi_r = s0 - sigmoid(x)
    psi_rr = s1 - lam_r
    psi_rrr = s2 - lam_r_d
    psi_t = a * s0 + et
    psi_rt = a * s1
    psi_rrt = a * s2
    psi_tt = a * a * s1 + et
    psi_rtt = a * a * s2
    psi_ttt = a ** 3 * s2 + et

    g11 = lam_r + eta * psi_rr
    g12 = eta1 * psi_r + eta * psi_rt
    g22 = eta2 * psi + 2.0 * eta1 * psi_t + eta * psi_tt + alpha * et

    d11_dx = lam_r_d + eta * psi_rrr
    d11_dt = eta1 * psi_rr + eta * psi_rrt
    d12_dx = d11_dt
    d12_dt = eta2 * psi_r + 2.0 * eta1 * psi_rt + eta * psi_rtt
    d22_dx = d12_dt
    d22_dt = (eta3 * psi + 3.0 * eta2 * psi_t + 3.0 * eta1 * psi_tt
              + eta * psi_ttt + alpha * et)
    return {"g11": g11, "g12": g12, "g22": g22,
            "d11_dx": d11_dx, "d11_dt": d11_dt,
            "d12_dx": d12_dx, "d12_dt": d12_dt,
            "d22_dx": d22_dx, "d22_dt": d22_dt,
            "lam0": lam_r[:, 0]}


def build_test_config_form(model: TestConfigModel, grid: ReducedGrid,
                           B: float | None = None, b: float = 2.0,
                           kappa: float | None = None) -> BackgroundGeometry:
    """Glued model background of the product test configuration.

    The potential interpolates, through a radial cutoff, between the
    boundary fiber metric and its pullback under the C*-action of weight
    `weight_a`, plus a base factor scaled by `alpha_h`.  The resulting
    coefficients depend only on (rho, t) by construction; the restriction
    at t = 0 equals the boundary fiber metric exactly.

    Raises
    ------
    PositivityError
        If the cutoff interpolation produces an indefinite matrix; the
        message reports the smallest admissible alpha_h.
    """
    if grid.fiber_kind != TRUNCATED_RHO:
        raise ValueError("the test-configuration model lives on a "
                         "truncated_rho grid")
    p = _test_config_entries(model, grid, model.alpha_h)
    if np.any(p["g11"] <= 0.0):
        raise PositivityError("glued form has a non-positive fiber entry")
    dets = p["g11"] * p["g22"] - p["g12"] ** 2
    if np.any(dets <= 0.0):
        need = required_alpha(model, grid)
        raise PositivityError(
            "glued form is indefinite on the grid: alpha_h = "
            f"{model.alpha_h:g} is too small, need alpha_h > {need:.6g}")
    g0 = mf.mat(p["g11"], p["g12"], p["g22"])
    dg0_dx = mf.mat(p["d11_dx"], p["d12_dx"], p["d22_dx"])
    dg0_dt = mf.mat(p["d11_dt"], p["d12_dt"], p["d22_dt"])
    epsilon = model.epsilon
    if B is None:
        B = 2.0 / epsilon
    lam = p["lam0"]
    if kappa is None:
        kappa = default_kappa(grid, lam, epsilon)
    return BackgroundGeometry(grid=grid, lam=lam, g0=g0, dg0_dx=dg0_dx,
                              dg0_dt=dg0_dt, epsilon=epsilon,
                              reg=ExpReg(epsilon, kappa), B=B, b=b,
                              kappa=kappa,
                              curvature_kind=CURVATURE_UNAVAILABLE)


def assert_rotation_invariant_signatures() -> None:
    """Structural invariance check: no public geometry operation accepts an
    angular coordinate."""
    banned = {"theta", "angle", "phase", "arg_w"}
    for name, fn in globals().items():
        if callable(fn) and not name.startswith("_") and inspect.isfunction(fn):
            params = set(inspect.signature(fn).parameters)
            if params & banned:
                raise AssertionError(f"{name} consumes an angular coordinate")
