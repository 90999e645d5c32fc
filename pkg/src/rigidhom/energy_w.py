"""Elastic density: squared distance to the rotation group in 2d.

For a 2x2 matrix F, dist^2(F, SO(2)) = |F|^2 + 2 - 2*hypot(F11+F22, F21-F12),
the closed form of the polar decomposition.  Frame indifferent and zero
exactly on rotations.
"""

from __future__ import annotations

import numpy as np


def nearest_rotation_2x2(F: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (batched over leading axes)."""
    F = np.asarray(F, dtype=float)
    t = F[..., 0, 0] + F[..., 1, 1]
    s = F[..., 1, 0] - F[..., 0, 1]
    r = np.hypot(t, s)
    c = np.where(r > 0, t / np.where(r > 0, r, 1.0), 1.0)
    sn = np.where(r > 0, s / np.where(r > 0, r, 1.0), 0.0)
    R = np.empty(F.shape)
    R[..., 0, 0] = c
    R[..., 1, 1] = c
    R[..., 1, 0] = sn
    R[..., 0, 1] = -sn
    return R


def w_dist2_so2(F: np.ndarray) -> np.ndarray:
    """dist^2(F, SO(2)), vectorized over leading axes of (..., 2, 2)."""
    F = np.asarray(F, dtype=float)
    t = F[..., 0, 0] + F[..., 1, 1]
    s = F[..., 1, 0] - F[..., 0, 1]
    frob2 = (F ** 2).sum(axis=(-2, -1))
    return np.maximum(frob2 + 2.0 - 2.0 * np.hypot(t, s), 0.0)
