"""Closed-form and brute-force reference solutions.

Oracle status is earned, not assumed: every nontrivial oracle carries a
refinement self-test (its reduced Monge-Ampere residual must shrink at
second order) and is rejected at runtime when the check fails.

* pluriharmonic rays c*t solve the totally degenerate equation exactly,
  even discretely, for fiber-pullback backgrounds;
* the product-configuration ray on the P^1 model is the pullback of the
  boundary fiber potential under the weight-a action, a rank-one
  perturbation, so its reduced determinant vanishes identically;
* toric geodesic segments come from the partial Legendre transform: the
  dual symplectic potential interpolates affinely in t;
* manufactured fields pair a smooth potential with the density it
  actually produces, evaluated by dense per-point determinants of the
  analytic Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import matfield as mf
from .errors import OracleCheckError, PositivityError
from .geometry import BackgroundGeometry, sigmoid, softplus
from .grid import ReducedGrid, TRUNCATED_RHO
from .ma_core import reduced_hessian_field
from .solvers import BoundarySpec, PotentialField


@dataclass(frozen=True)
class OracleSpec:
    """Requested reference solution: kind plus kind-specific parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("pluriharmonic", "product_ray", "toric_segment", "manufactured")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")


def _field_from_values(grid: ReducedGrid, values: np.ndarray,
                       s: float | None = None) -> PotentialField:
    return PotentialField(grid, values, s=s,
                          boundary=BoundarySpec.from_field(grid, values))


# -- pluriharmonic rays ------------------------------------------------------

def pluriharmonic_ray(c: float, grid: ReducedGrid) -> PotentialField:
    """The ray c * t; exact solution of the degenerate equation for any
    fiber-pullback background, with identically zero reduced Hessian."""
    values = np.broadcast_to(c * grid.t, grid.shape).copy()
    return _field_from_values(grid, values)


# -- product-configuration ray ----------------------------------------------

def product_ray(a: int, grid: ReducedGrid) -> PotentialField:
    """Geodesic ray of the weight-a product configuration on the P^1 model.

    phi(rho, t) = log(1 + e^{rho + a t}) - log(1 + e^rho); its trace at
    t = 0 vanishes and the reduced determinant against the P^1 fiber
    pullback is identically zero in the continuum.
    """
    if grid.fiber_kind != TRUNCATED_RHO:
        raise ValueError("the product ray lives on a truncated_rho grid")
    if a < 0 or int(a) != a:
        raise ValueError("the action weight must be a nonnegative integer")
    x, t = grid.meshgrid()
    values = softplus(x + a * t) - softplus(x)
    return _field_from_values(grid, values)


def ray_model_background(grid: ReducedGrid, a: int, epsilon: float = 0.5,
                         kappa: float = 1.0, B: float | None = None,
                         b: float = 2.0) -> "BackgroundGeometry":
    """Background whose data absorbs the analytic ray Hessian.

    Solving the zero-data continuation on this background is the change of
    unknowns phi = (product ray) + u applied to the oracle-data run on the
    plain P^1 pullback: the two problems share the same perturbed forms,
    and u vanishes identically in the degenerate limit.  Folding the
    closed-form Hessian into the background keeps every family form
    strictly positive (the grid representation of the ray alone is only
    positive up to discretization error), so cold starts stay admissible
    at every family parameter.

    The combined coefficient field is sig'(rho + a t) times the rank-one
    action matrix [[1, a], [a, a^2]]; all derivative fields are analytic.
    """
    from .geometry import BackgroundGeometry, ExpReg
    if grid.fiber_kind != TRUNCATED_RHO:
        raise ValueError("the ray model lives on a truncated_rho grid")
    x, t = grid.meshgrid()
    sigma = x + a * t
    s0 = sigmoid(sigma)
    s1 = s0 * (1.0 - s0)
    s2 = s1 * (1.0 - 2.0 * s0)
    act = np.array([[1.0, a], [a, a * a]], dtype=float)
    g0 = s1[..., None, None] * act
    dg0_dx = s2[..., None, None] * act
    dg0_dt = a * s2[..., None, None] * act
    lam = sigmoid(grid.x) * (1.0 - sigmoid(grid.x))
    if B is None:
        B = 2.0 / epsilon
    return BackgroundGeometry(grid=grid, lam=lam, g0=g0, dg0_dx=dg0_dx,
                              dg0_dt=dg0_dt, epsilon=epsilon,
                              reg=ExpReg(epsilon, kappa), B=B, b=b,
                              kappa=kappa, curvature_kind="unavailable")


def product_ray_residual(a: int, grid: ReducedGrid) -> float:
    """Max interior reduced Monge-Ampere determinant of the ray against
    the fiber-pullback P^1 background."""
    phi = product_ray(a, grid)
    lam = sigmoid(grid.x) * (1.0 - sigmoid(grid.x))
    g = mf.mat(np.broadcast_to(lam[:, None], grid.shape), 0.0, 0.0)
    gp = g + reduced_hessian_field(grid, phi.values)
    dets = mf.det(gp)
    return float(np.abs(dets[grid.interior_mask()]).max())


def validate_product_ray(a: int, grid: ReducedGrid,
                         ratio_window=(2.8, 5.2)) -> dict:
    """Two-grid degeneracy self-test; raises OracleCheckError on failure."""
    coarse = grid.coarsen()
    r_c = product_ray_residual(a, coarse)
    r_f = product_ray_residual(a, grid)
    report = {"residual_coarse": r_c, "residual_fine": r_f,
              "ratio": r_c / r_f if r_f > 0 else np.inf}
    if a == 0:
        if r_f > 1e-13:
            raise OracleCheckError(f"trivial ray has residual {r_f:g}")
        return report
    if not (r_f < 1e-2 and ratio_window[0] <= report["ratio"] <= ratio_window[1]):
        raise OracleCheckError(
            f"product ray failed its degeneracy self-test: {report}")
    return report


# -- toric geodesic segments -------------------------------------------------

class SymplecticPotential:
    """Symplectic potential on the moment interval (0, 1): the standard
    boundary behavior y log y + (1-y) log(1-y) plus a smooth polynomial
    perturbation, strictly convex whenever the perturbation is mild."""

    def __init__(self, poly_coeffs=()):
        self.poly = np.polynomial.Polynomial(list(poly_coeffs) or [0.0])
        self._d1 = self.poly.deriv()
        self._d2 = self._d1.deriv()
        ys = np.linspace(1e-6, 1.0 - 1e-6, 2001)
        if np.any(self.d2(ys) <= 0.0):
            raise ValueError("convexity violation: the Legendre transform "
                             "is ill-defined for this perturbation")

    def value(self, y):
        y = np.asarray(y, dtype=float)
        ent = np.where(y > 0, y * np.log(np.maximum(y, 1e-300)), 0.0)
        ent = ent + np.where(y < 1, (1 - y) * np.log(np.maximum(1 - y, 1e-300)), 0.0)
        return ent + self.poly(y)

    def d1(self, y):
        y = np.asarray(y, dtype=float)
        return np.log(y) - np.log1p(-y) + self._d1(y)

    def d2(self, y):
        y = np.asarray(y, dtype=float)
        return 1.0 / y + 1.0 / (1.0 - y) + self._d2(y)


def _legendre_dual(u_d1: Callable, rho: np.ndarray, u_value: Callable) -> tuple:
    """Pointwise Legendre transform sup_y (rho y - u(y)) by bisection on the
    strictly increasing slope equation u'(y) = rho."""
    lo = np.full(rho.shape, 1e-13)
    hi = np.full(rho.shape, 1.0 - 1e-13)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        high = u_d1(mid) > rho
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    y_star = 0.5 * (lo + hi)
    return rho * y_star - u_value(y_star), y_star


def toric_segment(u0: SymplecticPotential, u1: SymplecticPotential,
                  grid: ReducedGrid) -> PotentialField:
    """Geodesic segment between the Kahler duals of u0 (at t = t_min) and
    u1 (at t = 0), built by Legendre-transforming the affine path
    u_t = (1 + t/T) u1 - (t/T) u0 back to the rho frame.

    The full potential solves the homogeneous reduced equation in the
    continuum; callers should confirm with :func:`toric_segment_residual`
    before trusting it on a new configuration.
    """
    if grid.fiber_kind != TRUNCATED_RHO:
        raise ValueError("toric segments live on a truncated_rho grid")
    T = -grid.t_min
    values = np.empty(grid.shape)
    for j, t in enumerate(grid.t):
        theta = 1.0 + t / T
        u_val = lambda y: theta * u1.value(y) + (1 - theta) * u0.value(y)
        u_slope = lambda y: theta * u1.d1(y) + (1 - theta) * u0.d1(y)
        dual, _ = _legendre_dual(u_slope, grid.x, u_val)
        values[:, j] = dual - softplus(grid.x)
    return _field_from_values(grid, values)


def toric_segment_residual(u0, u1, grid: ReducedGrid) -> float:
    phi = toric_segment(u0, u1, grid)
    lam = sigmoid(grid.x) * (1.0 - sigmoid(grid.x))
    g = mf.mat(np.broadcast_to(lam[:, None], grid.shape), 0.0, 0.0)
    gp = g + reduced_hessian_field(grid, phi.values)
    return float(np.abs(mf.det(gp)[grid.interior_mask()]).max())


def validate_toric_segment(u0, u1, grid: ReducedGrid,
                           ratio_window=(2.8, 5.2)) -> dict:
    coarse = grid.coarsen()
    r_c = toric_segment_residual(u0, u1, coarse)
    r_f = toric_segment_residual(u0, u1, grid)
    report = {"residual_coarse": r_c, "residual_fine": r_f,
              "ratio": r_c / r_f if r_f > 0 else np.inf}
    if r_f < 1e-12:
        return report  # exactly degenerate (t-independent or affine shift)
    if not (r_f < 1e-2 and ratio_window[0] <= report["ratio"] <= ratio_window[1]):
        raise OracleCheckError(
            f"toric segment failed its refinement self-test: {report}")
    return report


# -- manufactured solutions --------------------------------------------------

@dataclass
class ManufacturedField:
    """Closed-form potential with analytic first and second derivatives."""

    fn: Callable
    fn_x: Callable
    fn_t: Callable
    fn_xx: Callable
    fn_xt: Callable
    fn_tt: Callable
    label: str = ""

    def sample(self, grid: ReducedGrid) -> np.ndarray:
        x, t = grid.meshgrid()
        return self.fn(x, t)

    def hessian(self, grid: ReducedGrid) -> np.ndarray:
        """Analytic reduced Hessian field (no discretization error)."""
        x, t = grid.meshgrid()
        a = grid.fiber_weight
        return mf.mat(a * a * self.fn_xx(x, t), a * self.fn_xt(x, t),
                      self.fn_tt(x, t))

    def gradient(self, grid: ReducedGrid) -> np.ndarray:
        x, t = grid.meshgrid()
        a = grid.fiber_weight
        return np.stack([a * self.fn_x(x, t), self.fn_t(x, t)], axis=-1)


@dataclass
class ManufacturedProblem:
    """A manufactured pair: the potential, the Monge-Ampere ratio it
    produces against the regularized volume, and the solver target."""

    phi: PotentialField
    rhs: np.ndarray               # F = det g' / det g_eps
    log_rhs_density: np.ndarray   # log det g'
    star: ManufacturedField


def manufactured(phi_star: ManufacturedField, bg: BackgroundGeometry,
                 s: float) -> ManufacturedProblem:
    """Dense evaluation of the density a closed-form potential produces.

    Raises PositivityError when g_s + Hessian(phi_star) fails to be
    positive definite somewhere on the grid.
    """
    grid = bg.grid
    g_s = bg.omega_s(s).g
    gp = g_s + phi_star.hessian(grid)
    floor = mf.min_eig(gp).min()
    if floor <= 0.0:
        raise PositivityError(
            f"manufactured potential leaves the positivity cone "
            f"(min eigenvalue {floor:g})")
    det_gp = mf.det(gp)
    rhs = det_gp / bg.omega_eps().det()
    values = phi_star.sample(grid)
    return ManufacturedProblem(phi=_field_from_values(grid, values, s=s),
                               rhs=rhs, log_rhs_density=np.log(det_gp),
                               star=phi_star)


def trig_profile_field(amplitude: float, freq: int = 1, phase: float = 0.0,
                       tilt: float = 0.0, t_min: float = -2.0,
                       x_period: float = 1.0) -> ManufacturedField:
    """amplitude * trig(2 pi k x / L + phase) * (e^t - 1)(t - t_min) + tilt * t.

    The profile vanishes on both t-edges, so the field's boundary data is
    the tilt alone there; the tilt keeps the gradient bounded away from
    zero, which the gradient-identity checks need.
    """
    w = 2.0 * np.pi * freq / x_period

    def xpart(x):
        return np.sin(w * x + phase)

    def xpart_d(x):
        return w * np.cos(w * x + phase)

    def xpart_dd(x):
        return -w * w * np.sin(w * x + phase)

    def tpart(t):
        return np.expm1(t) * (t - t_min)

    def tpart_d(t):
        return np.exp(t) * (t - t_min) + np.expm1(t)

    def tpart_dd(t):
        return np.exp(t) * (t - t_min + 2.0)

    A = amplitude
    return ManufacturedField(
        fn=lambda x, t: A * xpart(x) * tpart(t) + tilt * t,
        fn_x=lambda x, t: A * xpart_d(x) * tpart(t),
        fn_t=lambda x, t: A * xpart(x) * tpart_d(t) + tilt,
        fn_xx=lambda x, t: A * xpart_dd(x) * tpart(t),
        fn_xt=lambda x, t: A * xpart_d(x) * tpart_d(t),
        fn_tt=lambda x, t: A * xpart(x) * tpart_dd(t),
        label=f"trig(k={freq}, A={amplitude:g}, phase={phase:.3f}, "
              f"tilt={tilt:g})")


def manufactured_suite(count: int, t_min: float, seed: int = 20240701,
                       base_amplitude: float = 0.05,
                       x_period: float = 1.0) -> list[ManufacturedField]:
    """Deterministic family of manufactured potentials with varied
    frequency, phase and tilt.

    Amplitudes shrink with frequency to keep the perturbed forms positive;
    tilts are large relative to amplitudes so the gradient norm stays
    bounded away from zero (identity checks divide by it).
    """
    rng = np.random.default_rng(seed)
    fields = []
    for i in range(count):
        freq = 1 + (i % 2)
        amp = base_amplitude / freq ** 2 * (0.6 + 0.4 * rng.random())
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        tilt = float(rng.uniform(0.45, 0.6)) * (1 if i % 3 else -1)
        fields.append(trig_profile_field(amp, freq, phase, tilt, t_min,
                                         x_period))
    return fields


def build_oracle(spec: OracleSpec, grid: ReducedGrid,
                 bg: BackgroundGeometry | None = None,
                 s: float | None = None):
    """Dispatch an OracleSpec to its constructor."""
    p = spec.params
    if spec.kind == "pluriharmonic":
        return pluriharmonic_ray(float(p.get("c", 0.0)), grid)
    if spec.kind == "product_ray":
        return product_ray(int(p.get("a", 1)), grid)
    if spec.kind == "toric_segment":
        u0 = SymplecticPotential(p.get("u0_coeffs", ()))
        u1 = SymplecticPotential(p.get("u1_coeffs", ()))
        return toric_segment(u0, u1, grid)
    if spec.kind == "manufactured":
        if bg is None or s is None:
            raise ValueError("manufactured oracles need a background and s")
        star = trig_profile_field(
            float(p.get("amplitude", 0.05)), int(p.get("freq", 1)),
            float(p.get("phase", 0.0)), float(p.get("tilt", 0.3)),
            grid.t_min, grid.x_range[1] - grid.x_range[0])
        return manufactured(star, bg, s)
    raise ValueError(f"unknown oracle kind {spec.kind!r}")
