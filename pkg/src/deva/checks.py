"""
Property oracles
================

Each check draws random instances from a seeded ``Rng``, compares two
independent computations of the same quantity, and returns a ``CheckResult``
carrying the worst deviation seen and the tolerance it was held to. The
``check`` CLI subcommand runs all of them; the acceptance tests call them
with the full trial counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from deva.diagnostics import prop32_check, sandwich_terms, theorem31_oracle, weighted_nuclear
from deva.linalg import Rng, svd, sym_eig
from deva.msign import msign_exact, msign_newton_schulz
from deva.optimizers import (MatrixOptState, VectorOptState, adam_step, deva_linf_step, deva_sinf_inst_step,
                             deva_sinf_step, default_hyperparams, soap_lite_step)
from deva.problems import build_trace_quadratic, full_gradient, kaczmarz_gradient


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: worst={self.worst:.3e} tol={self.tol:.3e}{extra}"


def _result(name, worst, tol, detail=""):
    return CheckResult(name, bool(worst <= tol), float(worst), float(tol), detail)


def _dims(rng, max_rows, max_cols):
    n, m = rng.integers(max_rows, 1)[0], rng.integers(max_cols, 1)[0]
    return 1 + n, 1 + m


def _positive(rng, shape, floor):
    return floor + rng.uniform(int(np.prod(shape))).reshape(shape)


def _full_rank(rng, n, m):
    while True:
        g = rng.gaussian((n, m))
        s = svd(g).s
        if s[-1] > 1e-3 * s[0]:
            return g


def _pinv_quarter_root(a):
    """``a^{-1/4}`` on the range of the PSD matrix ``a``, zero on its null space."""
    eig = sym_eig(a)
    lam = eig.values
    keep = lam > 1e-12 * lam[0]
    inv = np.zeros_like(lam)
    inv[keep] = lam[keep] ** -0.25
    return eig.vectors @ np.diag(inv) @ eig.vectors.T


def kronecker_equivalence(trials=200, seed=0):
    """Coordinate-wise adaptive update equals the Kronecker-vectorized one."""
    rng = Rng(seed)
    shapes = [(3, 2), (2, 3), (4, 4), (5, 3)]
    worst = 0.0
    for k in range(trials):
        n, m = shapes[k % len(shapes)]
        g = rng.gaussian((n, m))
        e = _positive(rng, (n, m), 0.1)
        worst = max(worst, theorem31_oracle(g, e))
    return _result("kronecker_equivalence", worst, 1e-8)


def polar_identity(trials=200, seed=1, max_dim=16):
    """``(G G^T)^{-1/4} G (G^T G)^{-1/4}`` equals ``msign_exact(G)``; on the longer
    side of a rectangular ``G`` the inverse root is taken on the range."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(trials):
        g = _full_rank(rng, *_dims(rng, max_dim, max_dim))
        lhs = _pinv_quarter_root(g @ g.T) @ g @ _pinv_quarter_root(g.T @ g)
        worst = max(worst, float(np.linalg.norm(lhs - msign_exact(g))))
    return _result("polar_identity", worst, 1e-6)


def spectral_row_norms(trials=200, seed=2, max_dim=16):
    rng = Rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, m = _dims(rng, max_dim, max_dim)
        worst = max(worst, prop32_check(rng.gaussian((n, m))))
    return _result("spectral_row_norms", worst, 1e-8)


def gd_parity(steps=200, seed=3, lr=1e-4):
    """Full-batch GD losses on paired homogeneous/heterogeneous instances coincide."""
    root = Rng(seed)
    probs = [build_trace_quadratic(kind, root.spawn(1)) for kind in ("hom", "het")]
    xs = [p.initial_point(root.spawn(2)) for p in probs]
    worst = 0.0
    for _ in range(steps):
        grads = [full_gradient(p, x) for p, x in zip(probs, xs)]
        a, b = grads[0].value, grads[1].value
        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
        xs = [x - lr * gs.grad for x, gs in zip(xs, grads)]
    return _result("gd_parity", worst, 1e-6)


def scale_invariance(trials=100, seed=4, shape=(6, 4)):
    """With all betas and eps at zero the DeVA matrix step ignores gradient scale."""
    rng = Rng(seed)
    hp = default_hyperparams("deva_sinf", beta1=0.0, beta2=0.0, beta3=0.0, eps=0.0, lr=0.1)
    worst = 0.0
    for _ in range(trials):
        x = rng.gaussian(shape)
        g = rng.gaussian(shape)
        ref = deva_sinf_step(MatrixOptState.zeros(shape), x, g, hp)
        for c in (1e-3, 1.0, 1e3):
            out = deva_sinf_step(MatrixOptState.zeros(shape), x, c * g, hp)
            worst = max(worst, float(np.max(np.abs(out - ref))))
    return _result("scale_invariance", worst, 1e-6)


def sign_magnitude(trials=100, seed=5, dim=12, steps=5):
    """With ``beta1 = 0`` the sign step ``gamma * sign(m)`` equals ``m / sqrt(v)`` up
    to ``sqrt(eps / v)`` per coordinate."""
    rng = Rng(seed)
    hp = default_hyperparams("deva_linf", beta1=0.0, beta2=0.9, lr=1.0)
    worst = 0.0
    for _ in range(trials):
        st = VectorOptState.zeros((dim,))
        x = np.zeros(dim)
        for _ in range(steps):
            g = rng.gaussian((dim,))
            x_new = deva_linf_step(st, x, g, hp)
            d = x - x_new
            slack = np.sqrt(hp.eps / st.v) + 1e-12
            worst = max(worst, float(np.max(np.abs(d - st.m / np.sqrt(st.v)) / slack)))
            x = x_new
    return _result("sign_magnitude", worst, 1.0, "deviation / sqrt(eps/v)")


def rotated_adam_identity(trials=50, seed=6, shape=(4, 3), steps=5):
    """Rotated Adam with frozen identity bases is Adam on the flattened gradient."""
    rng = Rng(seed)
    hp = default_hyperparams("soap_lite", beta1=0.9, beta2=0.99, lr=0.01)
    worst = 0.0
    for _ in range(trials):
        ms = MatrixOptState.zeros(shape)
        ms.Q_L, ms.Q_R, ms.frozen_basis = np.eye(shape[0]), np.eye(shape[1]), True
        vs = VectorOptState.zeros((shape[0] * shape[1],))
        xm = rng.gaussian(shape)
        xv = xm.ravel().copy()
        for _ in range(steps):
            g = rng.gaussian(shape)
            xm = soap_lite_step(ms, xm, g, hp)
            xv = adam_step(vs, xv, g.ravel(), hp)
            worst = max(worst, float(np.max(np.abs(xm.ravel() - xv))))
    return _result("rotated_adam_identity", worst, 1e-10)


def instantaneous_identity(trials=50, seed=7, shape=(5, 4), steps=12):
    """With ``beta1 = 0`` the instantaneous variant is bit-identical to the base."""
    rng = Rng(seed)
    hp = default_hyperparams("deva_sinf", beta1=0.0, lr=0.01)
    mismatches = 0
    for _ in range(trials):
        a, b = MatrixOptState.zeros(shape), MatrixOptState.zeros(shape)
        xa = xb = rng.gaussian(shape)
        for _ in range(steps):
            g = rng.gaussian(shape)
            xa = deva_sinf_step(a, xa, g, hp)
            xb = deva_sinf_inst_step(b, xb, g, hp)
            mismatches += int(not np.array_equal(xa, xb))
    return _result("instantaneous_identity", float(mismatches), 0.0, "mismatching steps")


def kaczmarz_unbiased(trials=20, seed=8):
    rng = Rng(seed)
    worst = 0.0
    for k in range(trials):
        p = build_trace_quadratic("het" if k % 2 else "hom", rng.spawn(k))
        x = rng.gaussian(p.param_shape)
        avg = sum(kaczmarz_gradient(p, x, (i,)).grad for i in range(p.dim)) / p.dim
        full = full_gradient(p, x).grad
        worst = max(worst, float(np.max(np.abs(avg - full))) / max(1.0, float(np.max(np.abs(full)))))
    return _result("kaczmarz_unbiased", worst, 1e-10)


def weighted_sandwich(trials=200, seed=9, max_dim=8):
    """``min(G) ||S||_* <= <S, msign(S)>_G <= ||G*S||_*`` and the weighted maximizer
    ``msign(G*S)`` attains the upper side."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, m = _dims(rng, max_dim, max_dim)
        s = rng.gaussian((n, m))
        gamma = _positive(rng, (n, m), 0.1)
        lower, middle, maximizer, upper = sandwich_terms(s, gamma)
        worst = max(worst, lower - middle, middle - upper, abs(maximizer - upper))
    return _result("weighted_sandwich", worst, 1e-8)


def newton_schulz_distance(trials=200, seed=10, max_rows=64, max_cols=32):
    """Distance of the 5-step quintic to the exact polar factor, relative to
    ``0.05 sqrt(min(n, m))``."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, m = _dims(rng, max_rows, max_cols)
        g = rng.gaussian((n, m))
        dist = float(np.linalg.norm(msign_newton_schulz(g) - msign_exact(g)))
        worst = max(worst, dist / (0.05 * math.sqrt(min(n, m))))
    return _result("newton_schulz_distance", worst, 1.0, "distance / (0.05 sqrt(min(n,m)))")


def newton_schulz_band(trials=200, seed=11, max_rows=64, max_cols=32, floor=1e-3):
    """Output singular values lie in ``[0.6, 1.2]`` for every input direction whose
    Frobenius-normalized singular value exceeds ``floor``."""
    rng = Rng(seed)
    lo, hi = math.inf, 0.0
    for _ in range(trials):
        n, m = _dims(rng, max_rows, max_cols)
        g = rng.gaussian((n, m))
        s_in = svd(g).s / np.linalg.norm(g)
        s_out = svd(msign_newton_schulz(g)).s
        keep = s_in > floor
        lo = min(lo, float(np.min(s_out[keep])))
        hi = max(hi, float(np.max(s_out[keep])))
    excess = max(0.6 - lo, hi - 1.2, 0.0)
    return _result("newton_schulz_band", excess, 0.0, f"singular values in [{lo:.4f}, {hi:.4f}]")


def weighted_nuclear_duality(trials=100, seed=12, dim=5):
    """``weighted_nuclear`` equals ``sup <S, O>_Gamma`` over orthogonal ``O``,
    attained at ``msign(Gamma*S)``; random orthogonal ``O`` never exceed it."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(trials):
        s = rng.gaussian((dim, dim))
        gamma = _positive(rng, (dim, dim), 0.0)
        bound = weighted_nuclear(s, gamma)
        for _ in range(10):
            o = msign_exact(rng.gaussian((dim, dim)))
            worst = max(worst, float(np.sum(gamma * s * o)) - bound)
    return _result("weighted_nuclear_duality", worst, 1e-10)


CHECKS = {
    "kronecker_equivalence": kronecker_equivalence,
    "polar_identity": polar_identity,
    "spectral_row_norms": spectral_row_norms,
    "gd_parity": gd_parity,
    "scale_invariance": scale_invariance,
    "sign_magnitude": sign_magnitude,
    "rotated_adam_identity": rotated_adam_identity,
    "instantaneous_identity": instantaneous_identity,
    "kaczmarz_unbiased": kaczmarz_unbiased,
    "weighted_sandwich": weighted_sandwich,
    "newton_schulz_distance": newton_schulz_distance,
    "newton_schulz_band": newton_schulz_band,
    "weighted_nuclear_duality": weighted_nuclear_duality,
}


def run_all(names=None):
    return [CHECKS[n]() for n in (names or CHECKS)]


__all__ = ["CHECKS", "CheckResult", "run_all", *CHECKS]
