"""Reduced computational domain and finite-difference stencils.

The domain is the circle-invariant reduction of a product ``X x A`` where
``A`` is the annulus ``{e^{t_min/2} <= |w| <= 1}``, coordinatized by
``t = log|w|^2``, and ``X`` is a one-dimensional fiber with a real invariant
coordinate ``x``.  All fields are arrays of shape ``(nx, nt)`` with x along
axis 0 and t along axis 1; ``t = 0`` (the outer boundary circle) is always
the last t-slice.

Two fiber models are supported:

* ``periodic_x``: flat-torus fiber, ``x`` periodic, holomorphic coordinate
  ``z = x + iy``.  On invariant functions ``d/dz -> (1/2) d/dx``, so the
  fiber weight is 1/2.
* ``truncated_rho``: P^1-model fiber in the logarithmic coordinate
  ``rho = log|z1/z0|^2`` truncated to ``[-R, R]`` with Dirichlet edges.
  In the log frame ``d/dxi -> d/drho``, weight 1.

Complex-coordinate computations use the log frame (``z`` or ``xi``, and
``v = log w``), in which every invariant tensor component is a real
function of ``(x, t)`` and the reduced (1,1) Hessian of a potential is

    [[a^2 f_xx, a f_xt], [a f_xt, f_tt]],    a = fiber weight.

Derivative helpers return full-shape arrays, using second-order one-sided
stencils on non-periodic edges so that boundary diagnostics stay
consistent with the interior discretization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PERIODIC_X = "periodic_x"
TRUNCATED_RHO = "truncated_rho"


@dataclass(frozen=True)
class ReducedGrid:
    """Tensor-product grid for the reduced domain.

    Parameters
    ----------
    fiber_kind : str
        ``"periodic_x"`` (flat-torus fiber) or ``"truncated_rho"``
        (P^1-model fiber, Dirichlet in rho).
    nx, nt : int
        Number of points in the fiber and base directions, both >= 8.
    x_range : (float, float)
        Fiber interval.  Periodic fibers cover ``[x0, x1)`` with nx cells;
        truncated fibers include both endpoints.
    t_range : (float, float)
        ``(t_min, 0.0)`` with ``t_min < 0``; t = 0 is the outer boundary.
    """

    fiber_kind: str
    nx: int
    nt: int
    x_range: tuple[float, float]
    t_range: tuple[float, float]
    x: np.ndarray = field(init=False, repr=False, compare=False)
    t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.fiber_kind not in (PERIODIC_X, TRUNCATED_RHO):
            raise ValueError(f"unknown fiber_kind {self.fiber_kind!r}")
        if self.nx < 8 or self.nt < 8:
            raise ValueError("nx and nt must both be >= 8")
        x0, x1 = self.x_range
        t_min, t_max = self.t_range
        if not x1 > x0:
            raise ValueError("empty x_range")
        if not (t_min < 0.0 and t_max == 0.0):
            raise ValueError("t_range must be (t_min, 0.0) with t_min < 0")
        if self.periodic:
            x = x0 + (x1 - x0) * np.arange(self.nx) / self.nx
        else:
            x = np.linspace(x0, x1, self.nx)
        t = np.linspace(t_min, 0.0, self.nt)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        assert t[-1] == 0.0  # |w| = 1 boundary always on the grid

    @property
    def periodic(self) -> bool:
        return self.fiber_kind == PERIODIC_X

    @property
    def hx(self) -> float:
        w = self.x_range[1] - self.x_range[0]
        return w / self.nx if self.periodic else w / (self.nx - 1)

    @property
    def ht(self) -> float:
        return abs(self.t_range[0]) / (self.nt - 1)

    @property
    def t_min(self) -> float:
        return self.t_range[0]

    @property
    def fiber_weight(self) -> float:
        """Factor a with d/d(fiber holomorphic coord) = a * d/dx."""
        return 0.5 if self.periodic else 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nt)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.t, indexing="ij")

    def interior_mask(self, pad: int = 1) -> np.ndarray:
        """Boolean mask of points at least `pad` stencil layers from edges."""
        m = np.zeros(self.shape, dtype=bool)
        if self.periodic:
            m[:, pad:self.nt - pad] = True
        else:
            m[pad:self.nx - pad, pad:self.nt - pad] = True
        return m

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(1)

    def is_interior(self, point: tuple[int, int], pad: int = 1) -> bool:
        i, j = point
        ok_t = pad <= j < self.nt - pad
        ok_x = True if self.periodic else pad <= i < self.nx - pad
        return ok_t and ok_x

    def refine(self) -> "ReducedGrid":
        """Grid with doubled resolution in both directions."""
        return ReducedGrid(self.fiber_kind, 2 * self.nx, 2 * self.nt,
                           self.x_range, self.t_range)

    def coarsen(self) -> "ReducedGrid":
        if self.nx % 2 or self.nt % 2:
            raise ValueError("grid sizes must be even to coarsen")
        return ReducedGrid(self.fiber_kind, self.nx // 2, self.nt // 2,
                           self.x_range, self.t_range)


def _d1_nonperiodic(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    out[1:-1] = (g[2:] - g[:-2]) / (2.0 * h)
    out[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h)
    out[-1] = (3.0 * g[-1] - 4.0 * g[-2] + g[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _d2_nonperiodic(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    out[1:-1] = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / (h * h)
    out[0] = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / (h * h)
    out[-1] = (2.0 * g[-1] - 5.0 * g[-2] + 4.0 * g[-3] - g[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def d_x(grid: ReducedGrid, f: np.ndarray) -> np.ndarray:
    """Centered d/dx; one-sided second-order stencils on truncated edges."""
    if grid.periodic:
        return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * grid.hx)
    return _d1_nonperiodic(f, grid.hx, axis=0)


def d_t(grid: ReducedGrid, f: np.ndarray) -> np.ndarray:
    """Centered d/dt; one-sided second-order stencils at t-edges."""
    return _d1_nonperiodic(f, grid.ht, axis=1)


def d_xx(grid: ReducedGrid, f: np.ndarray) -> np.ndarray:
    if grid.periodic:
        return (np.roll(f, -1, 0) - 2.0 * f + np.roll(f, 1, 0)) / grid.hx ** 2
    return _d2_nonperiodic(f, grid.hx, axis=0)


def d_tt(grid: ReducedGrid, f: np.ndarray) -> np.ndarray:
    return _d2_nonperiodic(f, grid.ht, axis=1)


def d_xt(grid: ReducedGrid, f: np.ndarray) -> np.ndarray:
    """Mixed derivative as composition of the two first-derivative stencils."""
    return d_t(grid, d_x(grid, f))


def quadrature_weights(grid: ReducedGrid) -> np.ndarray:
    """Cell weights for integration over the (x, t) rectangle.

    Rectangle rule in the periodic direction, trapezoid otherwise; this is
    second-order consistent with the centered discretization.
    """
    wx = np.full(grid.nx, grid.hx)
    if not grid.periodic:
        wx[0] *= 0.5
        wx[-1] *= 0.5
    wt = np.full(grid.nt, grid.ht)
    wt[0] *= 0.5
    wt[-1] *= 0.5
    return np.outer(wx, wt)
