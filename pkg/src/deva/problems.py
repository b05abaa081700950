"""
Quadratic benchmark objectives
==============================

``f(X) = 1/2 <X, H X>`` with ``H = A^T A`` symmetric positive definite. The
parameter is a ``d x d`` matrix for the trace quadratic and a length-``d``
vector for the vector quadratic; both share one gradient contract:

- ``full_gradient`` returns the exact value and ``H X``;
- ``kaczmarz_gradient`` treats each row ``a_i`` of ``A`` as one sample and
  returns ``(d / |batch|) * sum_i a_i (a_i^T X)``, an unbiased estimator of
  ``H X`` under uniform row sampling with replacement.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deva.errors import InvalidInput, ShapeMismatch
from deva.linalg import Rng, cholesky, sym_eig

TRACE_SPECTRUM = (1.0, 2.0, 3.0, 99.0, 100.0, 101.0, 4998.0, 4999.0, 5000.0)
BLOCK = 3


@dataclass(frozen=True)
class GradSample:
    value: float
    grad: np.ndarray
    batch_rows: tuple = ()


@dataclass(frozen=True)
class Quadratic:
    """``H`` (d x d), its factor ``A`` with ``H = A^T A``, and the eigenvector
    basis whose column ``k`` carries ``spectrum[k]``."""

    H: np.ndarray
    A: np.ndarray
    kind: str
    spectrum: tuple
    basis: np.ndarray = field(repr=False)
    param_shape: tuple

    @property
    def dim(self):
        return self.H.shape[0]

    def initial_point(self, rng):
        """Gaussian coefficients in the eigenbasis, scaled to unit Frobenius norm.

        The draw is distributed exactly like i.i.d. Gaussian entries (the
        basis is orthogonal), and two instances sharing a spectrum receive
        the same coefficients per eigenvalue for the same seed.
        """
        z = rng.gaussian(self.param_shape)
        x = self.basis @ z
        return x / np.linalg.norm(x)


TraceQuadratic = Quadratic


def _block_spectra(kind, spectrum):
    spectrum = tuple(float(s) for s in spectrum)
    d = len(spectrum)
    if d % BLOCK:
        raise InvalidInput(f"spectrum length {d} is not a multiple of {BLOCK}")
    nblocks = d // BLOCK
    ordered = sorted(spectrum)
    if kind == "hom":
        # each block: one magnitude group
        return [ordered[b * BLOCK:(b + 1) * BLOCK] for b in range(nblocks)]
    if kind == "het":
        # each block: one eigenvalue from every magnitude group
        return [ordered[b::nblocks] for b in range(nblocks)]
    raise InvalidInput(f"trace quadratic kind must be 'hom' or 'het', got {kind!r}")


def _factor(h):
    return cholesky(h).T


def build_trace_quadratic(kind, rng, spectrum=TRACE_SPECTRUM):
    """Block-diagonal ``H`` with randomly rotated ``3 x 3`` blocks.

    Homogeneous blocks hold eigenvalues of one magnitude (``{1,2,3}``,
    ``{99,100,101}``, ``{4998,4999,5000}``); heterogeneous blocks mix them
    (``{1,99,4998}``, ...). Block ``b``'s rotation is the eigenvector matrix
    of ``B B^T`` for a Gaussian ``3 x 3`` ``B``; the draws do not depend on
    ``kind``, so equal seeds give paired instances.
    """
    blocks = _block_spectra(kind, spectrum)
    d = BLOCK * len(blocks)
    h = np.zeros((d, d))
    basis = np.zeros((d, d))
    ordered = sorted(float(s) for s in spectrum)
    used = [False] * d
    for b, lams in enumerate(blocks):
        g = rng.gaussian((BLOCK, BLOCK))
        q = sym_eig(g @ g.T).vectors
        sl = slice(b * BLOCK, (b + 1) * BLOCK)
        h[sl, sl] = q @ np.diag(lams) @ q.T
        for j, lam in enumerate(lams):
            k = next(i for i, s in enumerate(ordered) if s == lam and not used[i])
            used[k] = True
            basis[sl, k] = q[:, j]
    h = 0.5 * (h + h.T)
    return Quadratic(H=h, A=_factor(h), kind=kind, spectrum=tuple(ordered), basis=basis, param_shape=(d, d))


def quadratic_vector_problem(h, rng=None, rotate=False):
    """``f(x) = 1/2 x^T H x`` with ``H = diag(h)``, or ``Q diag(h) Q^T`` for a
    random orthogonal ``Q`` when ``rotate`` is set."""
    h = np.asarray(h, dtype=np.float64).ravel()
    if h.size == 0 or not np.all(h > 0):
        raise InvalidInput("spectrum must be nonempty and positive")
    d = h.size
    order = np.argsort(h, kind="stable")
    if rotate:
        if rng is None:
            raise InvalidInput("rotate=True needs an rng")
        g = rng.gaussian((d, d))
        q = sym_eig(g @ g.T).vectors
    else:
        q = np.eye(d)
    hm = q @ np.diag(h) @ q.T
    hm = 0.5 * (hm + hm.T)
    return Quadratic(H=hm, A=_factor(hm), kind="vector", spectrum=tuple(h[order]),
                     basis=q[:, order], param_shape=(d,))


def _check_point(p, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != p.param_shape:
        raise ShapeMismatch(f"expected parameter shape {p.param_shape}, got {x.shape}")
    return x


def loss(p, x):
    x = _check_point(p, x)
    return 0.5 * float(np.sum(x * (p.H @ x)))


def full_gradient(p, x):
    x = _check_point(p, x)
    hx = p.H @ x
    return GradSample(value=0.5 * float(np.sum(x * hx)), grad=hx)


def sample_rows(rng, p, batch_size):
    """Uniform row indices, with replacement."""
    return tuple(rng.integers(p.dim, batch_size))


def kaczmarz_gradient(p, x, batch):
    """Row-sampled gradient ``(d / |batch|) sum_i a_i (a_i^T X)``."""
    x = _check_point(p, x)
    batch = tuple(int(i) for i in batch)
    if not batch:
        raise InvalidInput("batch must be nonempty")
    if min(batch) < 0 or max(batch) >= p.dim:
        raise InvalidInput(f"row index out of range [0, {p.dim})")
    rows = p.A[list(batch)]
    proj = rows @ x
    scale = p.dim / len(batch)
    grad = scale * (rows.T @ proj)
    value = 0.5 * scale * float(np.sum(proj * proj))
    return GradSample(value=value, grad=grad, batch_rows=batch)


__all__ = [
    "GradSample",
    "Quadratic",
    "Rng",
    "TRACE_SPECTRUM",
    "TraceQuadratic",
    "build_trace_quadratic",
    "full_gradient",
    "kaczmarz_gradient",
    "loss",
    "quadratic_vector_problem",
    "sample_rows",
]
