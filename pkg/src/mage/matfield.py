"""Pointwise kernels for fields of small Hermitian matrices.

A "matrix field" is an array of shape ``(..., m, m)``; in the reduced
2-dimensional model m = 2 and all entries are real (invariant tensors in
the log frame carry no phases), but the kernels accept any m so the same
algebra serves general-size identity checks.  The 2x2 paths use closed
forms; they are branch-free, fast and bit-reproducible.
"""

from __future__ import annotations

import numpy as np


def mat(a11, a12, a22) -> np.ndarray:
    """Pack symmetric 2x2 entries (arrays or scalars) into (..., 2, 2)."""
    a11, a12, a22 = np.broadcast_arrays(a11, a12, a22)
    out = np.empty(a11.shape + (2, 2), dtype=float)
    out[..., 0, 0] = a11
    out[..., 0, 1] = a12
    out[..., 1, 0] = a12
    out[..., 1, 1] = a22
    return out


def det(m: np.ndarray) -> np.ndarray:
    if m.shape[-1] == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return np.linalg.det(m)


def inv(m: np.ndarray) -> np.ndarray:
    if m.shape[-1] == 2:
        d = det(m)
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 1, 1] = m[..., 0, 0]
        out[..., 0, 1] = -m[..., 0, 1]
        out[..., 1, 0] = -m[..., 1, 0]
        return out / d[..., None, None]
    return np.linalg.inv(m)


def trace(m: np.ndarray) -> np.ndarray:
    return np.trace(m, axis1=-2, axis2=-1)


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def min_eig(m: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of a symmetric matrix field."""
    if m.shape[-1] == 2:
        half_tr = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
        gap = np.sqrt(np.maximum(half_tr ** 2 - det(m), 0.0))
        return half_tr - gap
    return np.linalg.eigvalsh(m)[..., 0]


def eigvals_pair(g: np.ndarray, gp: np.ndarray) -> np.ndarray:
    """Eigenvalues of h = g^{-1} g' for positive definite g.

    They are the generalized eigenvalues of (g', g) and therefore real;
    returned sorted ascending along the last axis.
    """
    if g.shape[-1] == 2:
        h = inv(g) @ gp
        tr = trace(h)
        dis = np.sqrt(np.maximum(tr ** 2 - 4.0 * det(h), 0.0))
        lo = 0.5 * (tr - dis)
        hi = 0.5 * (tr + dis)
        return np.stack([lo, hi], axis=-1)
    # symmetrize through g^{-1/2} g' g^{-1/2}
    w, q = np.linalg.eigh(g)
    g_isqrt = (q / np.sqrt(w)[..., None, :]) @ np.swapaxes(q, -1, -2)
    return np.linalg.eigvalsh(g_isqrt @ gp @ g_isqrt)


def is_posdef(m: np.ndarray, floor: float = 0.0) -> bool:
    return bool(np.all(min_eig(m) > floor))
