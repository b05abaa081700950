"""
Weighted dual norms and consistency oracles
===========================================

``weighted_l1`` and ``weighted_nuclear`` are the duals of the l_inf and
spectral norms under a positive weighting of the inner product
``<s, x>_w = sum(w * s * x)``. ``h_alignment_trace`` evaluates them on a
Hessian with an optimizer's current adaptive weights.

``theorem31_oracle`` and ``prop32_check`` compare two independent routes to
the same quantity and return the largest discrepancy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deva.errors import InvalidInput, ShapeMismatch, UndefinedForZero
from deva.linalg import as_matrix, kron, svd, sym_eig
from deva.msign import msign_exact


@dataclass(frozen=True)
class NormTrace:
    step: int
    h_weighted: float
    gamma_mean: float
    gamma_sq_mean: float
    nuclear_rank: float


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


def _nonnegative(w, name):
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidInput(f"{name} must be finite and nonnegative")


def weighted_l1(s, gamma):
    """``sum_i gamma_i |s_i|``."""
    s = np.asarray(s, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    _same_shape(s, gamma, "weighted_l1")
    _nonnegative(gamma, "gamma")
    return float(np.sum(gamma * np.abs(s)))


def nuclear_norm(s):
    return float(np.sum(svd(s).s))


def weighted_nuclear(s, gamma):
    """Nuclear norm of ``gamma * s``."""
    s = as_matrix(s, "S")
    gamma = np.asarray(gamma, dtype=np.float64)
    _same_shape(s, gamma, "weighted_nuclear")
    _nonnegative(gamma, "Gamma")
    return nuclear_norm(gamma * s)


def nuclear_rank(s):
    """``||S||_*^2 / ||S||_F^2``, between 1 and ``rank(S)``."""
    s = as_matrix(s, "S")
    sv = svd(s).s
    fro2 = float(np.sum(sv * sv))
    if fro2 == 0.0:
        raise UndefinedForZero("nuclear rank of the zero matrix is undefined")
    return float(np.sum(sv)) ** 2 / fro2


def weighted_inner(s, x, gamma):
    """``<s * sqrt(gamma), x * sqrt(gamma)>``."""
    return float(np.sum(gamma * s * x))


def lifted_hessian_diagonal(h, shape):
    """Diagonal of ``I (x) H`` laid out in the parameter's shape.

    For ``f(X) = 1/2 Tr(X^T H X)`` the curvature of entry ``X[i, j]`` is
    ``H[i, i]``; for a vector parameter it is ``H[i, i]`` directly.
    """
    diag = np.diag(h)
    if len(shape) == 1:
        return diag.copy()
    return np.broadcast_to(diag[:, None], shape).copy()


def h_alignment_trace(h, weights, kind, step=0):
    """Smoothness weighted by adaptive step sizes.

    ``kind="vector"``: ``sum gamma^2 * diag(I (x) H)`` over parameter entries.
    ``kind="matrix"``: nuclear norm of ``Gamma * H``; ``Gamma`` must have the
    Hessian's shape.
    """
    h = as_matrix(h, "H")
    w = np.asarray(weights, dtype=np.float64)
    if kind == "vector":
        lifted = lifted_hessian_diagonal(h, w.shape)
        if len(w.shape) not in (1, 2) or w.shape[0] != h.shape[0]:
            raise ShapeMismatch(f"weights {w.shape} do not match Hessian {h.shape}")
        value = weighted_l1(lifted, w * w)
        nrank = nuclear_rank(h)
    elif kind == "matrix":
        _same_shape(h, w, "h_alignment_trace")
        value = weighted_nuclear(h, w)
        wh = w * h
        nrank = nuclear_rank(wh) if np.any(wh) else 1.0
    else:
        raise InvalidInput(f"kind must be 'vector' or 'matrix', got {kind!r}")
    return NormTrace(step=step, h_weighted=value, gamma_mean=float(np.mean(w)),
                     gamma_sq_mean=float(np.mean(w * w)), nuclear_rank=nrank)


def sandwich_terms(s, gamma):
    """The three quantities of the weighted spectral sandwich.

    Returns ``(min(Gamma) * ||S||_*, <S, msign(S)>_Gamma, <S, msign(Gamma*S)>_Gamma,
    ||Gamma*S||_*)``. The lower inequality holds for typical weights but can
    fail when ``Gamma`` is built adversarially from the sign pattern of
    ``S * msign(S)``.
    """
    s = as_matrix(s, "S")
    gamma = np.asarray(gamma, dtype=np.float64)
    _same_shape(s, gamma, "sandwich_terms")
    lower = float(np.min(gamma)) * nuclear_norm(s)
    middle = weighted_inner(s, msign_exact(s), gamma)
    maximizer = weighted_inner(s, msign_exact(gamma * s), gamma)
    return lower, middle, maximizer, weighted_nuclear(s, gamma)


def _spectral_frames(g):
    left = sym_eig(g @ g.T)
    right = sym_eig(g.T @ g)
    return left, right


def theorem31_oracle(g, expect_sigma):
    """Largest deviation between the Kronecker-vectorized adaptive update and
    its coordinate-wise Hadamard form.

    ``expect_sigma[i, j]`` stands in for the expectation of ``s_i s_j`` where
    ``s_i = sqrt(eig_i(G G^T))`` and ``s_j = sqrt(eig_j(G^T G))``.

    Route (i) builds ``(Q_L (x) Q_R) E^{-1/2} K^{1/4} (Q_L (x) Q_R)^T vec(msign(G))``
    with ``K = diag(Lambda_L) (x) diag(Lambda_R)`` and ``E = diag(vec(expect_sigma))``.
    Route (ii) forms ``Q_L (sqrt(s_i s_j / expect_sigma) * msign(Q_L^T G Q_R)) Q_R^T``.
    Entries with ``s_i s_j = 0`` (outside the rank-r block) carry zero weight
    in both routes.
    """
    g = as_matrix(g, "G")
    n, m = g.shape
    expect_sigma = np.asarray(expect_sigma, dtype=np.float64)
    if expect_sigma.shape != (n, m):
        raise ShapeMismatch(f"expect_sigma must be {(n, m)}, got {expect_sigma.shape}")
    if not np.all(expect_sigma > 0):
        raise InvalidInput("expect_sigma must be entrywise positive")
    left, right = _spectral_frames(g)
    lam = np.clip(left.values, 0.0, None)
    mu = np.clip(right.values, 0.0, None)
    q_l, q_r = left.vectors, right.vectors

    # (i) brute force on the nm x nm vectorization (row-major vec)
    q_kron = kron(q_l, q_r)
    k_quarter = np.diag(np.kron(lam, mu) ** 0.25)
    e_inv_sqrt = np.diag(expect_sigma.ravel() ** -0.5)
    vec = q_kron @ e_inv_sqrt @ k_quarter @ q_kron.T @ msign_exact(g).ravel()
    brute = vec.reshape(n, m)

    # (ii) coordinate-wise form
    sig_prod = np.outer(np.sqrt(lam), np.sqrt(mu))
    weight = np.sqrt(sig_prod / expect_sigma)
    coord = q_l @ (weight * msign_exact(q_l.T @ g @ q_r)) @ q_r.T

    return float(np.max(np.abs(brute - coord)))


def prop32_check(g):
    """Deviation between eigenvalues of ``G G^T`` / ``G^T G`` and the squared
    row / column norms of ``G' = Q_L^T G Q_R``, plus between the singular
    values of ``G`` and the row / column norms on the leading rank block.

    The result is normalized by ``||G||_F^2`` (eigenvalues) and ``||G||_F``
    (singular values).
    """
    g = as_matrix(g, "G")
    left, right = _spectral_frames(g)
    rot = left.vectors.T @ g @ right.vectors
    row_sq = np.einsum("ij,ij->i", rot, rot)
    col_sq = np.einsum("ij,ij->j", rot, rot)
    fro2 = float(np.sum(g * g))
    if fro2 == 0.0:
        return 0.0
    dev = max(np.max(np.abs(row_sq - left.values)), np.max(np.abs(col_sq - right.values))) / fro2
    sv = svd(g).s
    r = int(np.count_nonzero(sv > 1e-12 * sv[0]))
    sv_dev = max(np.max(np.abs(np.sqrt(row_sq[:r]) - sv[:r])),
                 np.max(np.abs(np.sqrt(col_sq[:r]) - sv[:r]))) / np.sqrt(fro2)
    return float(max(dev, sv_dev))


__all__ = [
    "NormTrace",
    "h_alignment_trace",
    "lifted_hessian_diagonal",
    "nuclear_norm",
    "nuclear_rank",
    "prop32_check",
    "sandwich_terms",
    "theorem31_oracle",
    "weighted_inner",
    "weighted_l1",
    "weighted_nuclear",
]
