"""
Dense linear algebra kernels
============================

Small, self-contained factorizations on float64 numpy arrays:

- ``svd``: one-sided Jacobi singular value decomposition
- ``sym_eig``: cyclic Jacobi eigendecomposition of a symmetric matrix
- ``qr_orthonormalize``: Gram-Schmidt with re-orthogonalization
- ``cholesky``: lower-triangular Cholesky factor
- ``kron``: Kronecker product
- ``Rng``: splitmix64 counter generator with Box-Muller Gaussians

Jacobi sweeps use a round-robin (tournament) ordering so that each round
applies ``n // 2`` disjoint rotations at once as vectorized column updates.
Orthonormal factors follow one sign convention: the largest-magnitude entry
of every column is nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from deva.errors import DegenerateBasis, InvalidInput, NotPositiveDefinite, ShapeMismatch

MAX_SWEEPS = 60
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class EigenPair:
    vectors: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class SvdTriple:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def as_matrix(a, name="a"):
    """Coerce to a finite 2-D float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


@lru_cache(maxsize=None)
def _rounds(n):
    """Round-robin pairing of ``range(n)``; every pair appears once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    k = len(players)
    out = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            p, q = zip(*pairs)
            out.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(out)


def _sign_fix(vectors, *others):
    """Flip columns so each column's largest-magnitude entry is nonnegative."""
    idx = np.argmax(np.abs(vectors), axis=0)
    flip = vectors[idx, np.arange(vectors.shape[1])] < 0
    if np.any(flip):
        vectors = vectors.copy()
        vectors[:, flip] *= -1
        others = tuple(o.copy() for o in others)
        for o in others:
            o[:, flip] *= -1
    return (vectors, *others)


def _complete_basis(q, k):
    """Fill columns ``k:`` of ``q`` with an orthonormal complement of ``q[:, :k]``."""
    n, r = q.shape
    q = q.copy()
    filled = k
    for e in range(n):
        if filled == r:
            break
        v = np.zeros(n)
        v[e] = 1.0
        for _ in range(2):
            v -= q[:, :filled] @ (q[:, :filled].T @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            q[:, filled] = v / nv
            filled += 1
    return q


def _one_sided_jacobi(a):
    """Orthogonalize the columns of tall ``a``; returns (W, V) with a @ V = W."""
    w = a.copy()
    m = w.shape[1]
    v = np.eye(m)
    tol = max(w.shape[0], 1) * _EPS
    rounds = _rounds(m)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            wp, wq = w[:, p], w[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            act = np.abs(gamma) > tol * np.sqrt(alpha) * np.sqrt(beta)
            if not np.any(act):
                continue
            rotated = True
            p, q = p[act], q[act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for mat in (w, v):
                mp, mq = mat[:, p], mat[:, q]
                mat[:, p] = c * mp - s * mq
                mat[:, q] = s * mp + c * mq
        if not rotated:
            break
    return w, v


def svd(a):
    """Reduced SVD ``a = u @ diag(s) @ v.T`` with ``s`` sorted descending.

    Uses one-sided Jacobi on the orientation with at least as many rows as
    columns. Columns of ``u`` belonging to zero singular values are filled
    with an orthonormal complement so that ``u.T @ u = I`` always holds.
    """
    a = as_matrix(a)
    wide = a.shape[0] < a.shape[1]
    work = a.T if wide else a
    w, v = _one_sided_jacobi(work)
    s = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-s, kind="stable")
    s, w, v = s[order], w[:, order], v[:, order]
    live = s > s[0] * 1e-14 if s[0] > 0 else np.zeros(s.shape, dtype=bool)
    u = np.zeros_like(w)
    u[:, live] = w[:, live] / s[live]
    k = int(np.count_nonzero(live))
    s[~live] = 0.0
    if k < u.shape[1]:
        u = _complete_basis(u, k)
    v, u = _sign_fix(v, u)
    if wide:
        u, v = v, u
    return SvdTriple(u=u, s=s, v=v)


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    The input is symmetrized as ``(a + a.T) / 2`` before the Jacobi sweeps.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ShapeMismatch(f"sym_eig needs a square matrix, got {a.shape}")
    a = 0.5 * (a + a.T)
    vecs = np.eye(n)
    tol = n * _EPS
    floor = 1e-15 * np.linalg.norm(a)
    rounds = _rounds(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            apq = a[p, q]
            app, aqq = a[p, p], a[q, q]
            act = (np.abs(apq) > tol * np.sqrt(np.abs(app)) * np.sqrt(np.abs(aqq))) & (np.abs(apq) > floor)
            if not np.any(act):
                continue
            rotated = True
            p, q = p[act], q[act]
            apq, app, aqq = apq[act], app[act], aqq[act]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            # A <- J^T A J with J[p,p]=J[q,q]=c, J[p,q]=s, J[q,p]=-s
            cp, cq = a[:, p], a[:, q]
            a[:, p] = c * cp - s * cq
            a[:, q] = s * cp + c * cq
            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            a[p, p] = app - t * apq
            a[q, q] = aqq + t * apq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = vecs[:, p], vecs[:, q]
            vecs[:, p] = c * vp - s * vq
            vecs[:, q] = s * vp + c * vq
        if not rotated:
            break
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    (vecs,) = _sign_fix(vecs[:, order])
    return EigenPair(vectors=vecs, values=values[order])


def qr_orthonormalize(a):
    """Orthonormal basis for the column space of full-column-rank ``a``.

    Classical Gram-Schmidt applied twice per column. Raises
    ``DegenerateBasis`` when a column collapses below ``1e-12 * ||a||_F``
    after orthogonalization.
    """
    a = as_matrix(a)
    n, k = a.shape
    if k > n:
        raise DegenerateBasis(f"{k} columns cannot be independent in R^{n}")
    floor = 1e-12 * np.linalg.norm(a)
    q = np.zeros_like(a)
    for j in range(k):
        col = a[:, j].copy()
        for _ in range(2):
            col -= q[:, :j] @ (q[:, :j].T @ col)
        norm = np.linalg.norm(col)
        if norm <= floor or norm == 0.0:
            raise DegenerateBasis(f"column {j} is linearly dependent (residual {norm:.3e})")
        q[:, j] = col / norm
    (q,) = _sign_fix(q)
    return q


def cholesky(a):
    """Lower-triangular ``c`` with ``c @ c.T = a`` for symmetric positive definite ``a``."""
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ShapeMismatch(f"cholesky needs a square matrix, got {a.shape}")
    floor = 1e-12 * np.linalg.norm(a)
    c = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - c[j, :j] @ c[j, :j]
        if not pivot > floor:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e}")
        c[j, j] = np.sqrt(pivot)
        c[j + 1:, j] = (a[j + 1:, j] - c[j + 1:, :j] @ c[j, :j]) / c[j, j]
    return c


def kron(a, b):
    """Kronecker product; ``kron(a, b) @ x.ravel() == (a @ x @ b.T).ravel()``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    return np.kron(a, b)


# -- random numbers ---------------------------------------------------------

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Splitmix64 generator; identical seeds give identical streams everywhere."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def __repr__(self):
        return f"Rng(state={self.state:#018x})"

    def next_u64(self, size):
        counters = np.arange(1, size + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        counters += np.uint64(self.state)
        self.state = (self.state + size * _GAMMA) & _MASK
        return _mix(counters)

    def uniform(self, size):
        """Doubles in [0, 1) with 53 random bits."""
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def gaussian(self, shape):
        size = int(np.prod(shape))
        half = (size + 1) // 2
        u = self.uniform(2 * half)
        radius = np.sqrt(-2.0 * np.log1p(-u[:half]))
        angle = 2.0 * np.pi * u[half:]
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return z[:size].reshape(shape)

    def integers(self, high, size):
        """Unbiased integers in ``[0, high)`` by rejection."""
        if high <= 0:
            raise InvalidInput("high must be positive")
        limit = (1 << 64) - ((1 << 64) % high)
        out = []
        while len(out) < size:
            for x in self.next_u64(size - len(out)).tolist():
                if x < limit:
                    out.append(x % high)
        return out

    def spawn(self, key):
        """Independent child stream labelled by ``key`` (does not advance self)."""
        z = np.array([(self.state ^ (int(key) * _MIX2)) & _MASK], dtype=np.uint64)
        return Rng(int(_mix(z + np.uint64(_GAMMA))[0]))


def rng_gaussian(rng, rows, cols):
    """``rows x cols`` matrix of standard normal draws from ``rng``."""
    return rng.gaussian((rows, cols))
