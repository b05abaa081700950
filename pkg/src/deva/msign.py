"""Matrix sign (polar factor) of a rectangular matrix."""
from __future__ import annotations

import math
import warnings

import numpy as np

from deva.errors import ShapeMismatch
from deva.linalg import svd

NS_COEFFS = (3.4445, -4.7750, 2.0315)
NS_ITERS = 5
DROP_RTOL = 1e-12


def _as_2d(g):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ShapeMismatch(f"msign needs a 2-D matrix, got shape {g.shape}")
    return g


def msign_exact(g):
    """``U @ V.T`` from the reduced SVD of ``g``.

    Singular directions with ``s_i <= 1e-12 * s_max`` are dropped, so the
    zero matrix maps to the zero matrix and rank-deficient inputs give a
    partial isometry.
    """
    g = _as_2d(g)
    if not np.any(g):
        return np.zeros_like(g)
    t = svd(g)
    keep = t.s > DROP_RTOL * t.s[0]
    return t.u[:, keep] @ t.v[:, keep].T


def msign_newton_schulz(g, iters=NS_ITERS, coeffs=NS_COEFFS, sign_trick=False):
    """Approximate polar factor by the quintic Newton-Schulz iteration.

    ``X <- a X + b (X X^T) X + c (X X^T)^2 X`` starting from ``g / ||g||_F``,
    iterated on the orientation with fewer rows. The default coefficients do
    not converge to exactly 1: output singular values settle in roughly
    ``[0.68, 1.13]``.
    """
    g = _as_2d(g)
    if sign_trick:
        warnings.warn("sign_trick is not defined for this iteration; ignoring it", stacklevel=2)
    norm = np.linalg.norm(g)
    if norm == 0.0:
        return np.zeros_like(g)
    a, b, c = coeffs
    tall = g.shape[0] > g.shape[1]
    x = (g.T if tall else g) / norm
    for _ in range(iters):
        gram = x @ x.T
        x = a * x + (b * gram + c * (gram @ gram)) @ x
    return x.T if tall else x


def rms_alignment_scale(n, m):
    """Scale ``0.2 * sqrt(max(n, m))`` matching an orthogonal update's RMS to Adam's."""
    return 0.2 * math.sqrt(max(n, m))
