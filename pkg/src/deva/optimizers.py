"""
Optimizer state machines
========================

Every optimizer is a pair of a mutable state dataclass and a step function
``step(state, x, g, hp, lr=None) -> x_new``. Step functions never modify
``x`` in place; they do update ``state``.

Vector methods (``gd``, ``signum``, ``adam``, ``deva_linf``) act
coordinate-wise on arrays of any shape. Matrix methods (``muon``,
``soap_lite``, ``deva_sinf``, ``deva_sinf_eff``, ``deva_sinf_inst``) need 2-D
parameters and reject anything else with ``ShapeMismatch``.

Conventions shared by all of them:

- ``sign(0) = 0``.
- Decoupled weight decay ``x <- x * (1 - lr * weight_decay)`` runs before the
  gradient step.
- Adaptive weights ``sqrt(num / den)`` are set to 0 where ``den`` vanishes,
  so dead coordinates never produce NaN.
- The matrix variants compute their first eigenbasis with a full ``sym_eig``
  on the first step and refresh it every ``freq`` steps with one power
  iteration followed by QR.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from deva.errors import DegenerateBasis, InvalidConfig, NumericalBreakdown, ShapeMismatch
from deva.linalg import qr_orthonormalize, sym_eig
from deva.msign import msign_exact, msign_newton_schulz, rms_alignment_scale

log = logging.getLogger(__name__)

VECTOR_KINDS = ("gd", "signum", "adam", "deva_linf")
MATRIX_KINDS = ("muon", "soap_lite", "deva_sinf", "deva_sinf_eff", "deva_sinf_inst")
KINDS = VECTOR_KINDS + MATRIX_KINDS


@dataclass(frozen=True)
class HyperParams:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    beta3: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.0
    freq: int = 10
    nesterov: bool = False
    ns_iters: int = 5
    bias_correction: bool = False
    msign: str = "newton_schulz"

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        # beta3 = 1 freezes the Kronecker factors
        if not 0.0 <= self.beta3 <= 1.0:
            raise InvalidConfig(f"beta3 must lie in [0, 1], got {self.beta3}")
        if self.eps < 0 or self.weight_decay < 0:
            raise InvalidConfig("eps and weight_decay must be nonnegative")
        if self.freq < 1 or self.ns_iters < 1:
            raise InvalidConfig("freq and ns_iters must be >= 1")
        if self.msign not in ("newton_schulz", "exact"):
            raise InvalidConfig(f"unknown msign method {self.msign!r}")


def default_hyperparams(kind, **overrides):
    """Defaults per optimizer family; ``overrides`` win."""
    if kind not in KINDS:
        raise InvalidConfig(f"unknown optimizer kind {kind!r}")
    if kind in MATRIX_KINDS:
        base = dict(beta1=0.95, beta2=0.95, beta3=0.95)
    else:
        base = dict(beta1=0.9, beta2=0.999)
    base["bias_correction"] = kind in ("adam", "soap_lite")
    base.update({k: v for k, v in overrides.items() if v is not None})
    return HyperParams(**base)


def schedule_lr(t, total, warmup_frac, base_lr):
    """Constant ``base_lr`` through the warmup fraction, then linear decay to 0 at ``total``."""
    if total < 1:
        raise InvalidConfig("total steps must be >= 1")
    if not 0.0 <= warmup_frac <= 1.0:
        raise InvalidConfig(f"warmup_frac must lie in [0, 1], got {warmup_frac}")
    if not 1 <= t <= total:
        raise InvalidConfig(f"step {t} outside [1, {total}]")
    if t <= warmup_frac * total:
        return base_lr
    flat = int(np.ceil(warmup_frac * total))
    return base_lr * (total - t) / max(total - flat, 1)


# -- states -----------------------------------------------------------------


@dataclass
class VectorOptState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    gamma: np.ndarray | None = None

    @classmethod
    def zeros(cls, shape):
        return cls(m=np.zeros(shape), v=np.zeros(shape))


@dataclass
class MomentumState:
    m: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape):
        return cls(m=np.zeros(shape))


@dataclass
class MatrixOptState:
    L: np.ndarray
    R: np.ndarray
    M: np.ndarray
    V: np.ndarray
    Q_L: np.ndarray | None = None
    Q_R: np.ndarray | None = None
    t: int = 0
    freq: int = 10
    frozen_basis: bool = False
    gamma: np.ndarray | None = None

    @classmethod
    def zeros(cls, shape, freq=10):
        n, m = _matrix_shape(shape)
        return cls(L=np.zeros((n, n)), R=np.zeros((m, m)), M=np.zeros((n, m)), V=np.zeros((n, m)), freq=freq)

    def second_moment_size(self):
        return self.V.size


@dataclass
class EffMatrixOptState:
    L: np.ndarray
    R: np.ndarray
    M: np.ndarray
    V_r: np.ndarray
    V_c: np.ndarray
    Q_L: np.ndarray | None = None
    Q_R: np.ndarray | None = None
    t: int = 0
    freq: int = 10
    frozen_basis: bool = False
    gamma: np.ndarray | None = None

    @classmethod
    def zeros(cls, shape, freq=10):
        n, m = _matrix_shape(shape)
        return cls(L=np.zeros((n, n)), R=np.zeros((m, m)), M=np.zeros((n, m)),
                   V_r=np.zeros(n), V_c=np.zeros(m), freq=freq)

    def second_moment_size(self):
        return self.V_r.size + self.V_c.size


# -- helpers ----------------------------------------------------------------


def _matrix_shape(shape):
    if len(shape) != 2:
        raise ShapeMismatch(f"matrix optimizers need a 2-D parameter, got shape {tuple(shape)}")
    return shape


def _check(x, g, matrix=False):
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape != g.shape:
        raise ShapeMismatch(f"parameter shape {x.shape} != gradient shape {g.shape}")
    if matrix:
        _matrix_shape(x.shape)
    return x, g


def _decay(x, lr, hp):
    if hp.weight_decay > 0:
        return x * (1.0 - lr * hp.weight_decay)
    return x


def _safe_root_ratio(num, den):
    """Elementwise ``sqrt(num / den)`` with 0 wherever ``den <= 0``."""
    out = np.zeros(np.broadcast(num, den).shape)
    ok = den > 0
    np.divide(num, den, out=out, where=ok)
    return np.sqrt(out)


def _safe_div(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _ema(old, new, beta):
    return beta * old + (1.0 - beta) * new


def _finite_or_raise(x, t, name):
    if not np.all(np.isfinite(x)):
        raise NumericalBreakdown(f"{name} produced a non-finite update at step {t}", step=t)
    return x


# -- vector methods -----------------------------------------------------------


def gd_step(x, g, hp, lr=None):
    x, g = _check(x, g)
    lr = hp.lr if lr is None else lr
    return _decay(x, lr, hp) - lr * g


def signum_step(state, x, g, hp, lr=None):
    x, g = _check(x, g)
    lr = hp.lr if lr is None else lr
    state.t += 1
    state.m = _ema(state.m, g, hp.beta1)
    arg = _ema(state.m, g, hp.beta1) if hp.nesterov else state.m
    return _decay(x, lr, hp) - lr * np.sign(arg)


def adam_step(state, x, g, hp, lr=None):
    x, g = _check(x, g)
    lr = hp.lr if lr is None else lr
    state.t += 1
    state.m = _ema(state.m, g, hp.beta1)
    state.v = _ema(state.v, g * g, hp.beta2)
    m, v = state.m, state.v
    if hp.nesterov:
        m = _ema(m, g, hp.beta1)
    if hp.bias_correction:
        m = m / (1.0 - hp.beta1 ** state.t)
        v = v / (1.0 - hp.beta2 ** state.t)
    denom = np.sqrt(v) + hp.eps
    state.gamma = _safe_div(np.abs(m), denom)
    return _decay(x, lr, hp) - lr * _safe_div(m, denom)


def deva_linf_step(state, x, g, hp, lr=None):
    """Sign step scaled by ``gamma = sqrt((m^2 + eps) / v)``, ``v`` an EMA of ``m^2``."""
    x, g = _check(x, g)
    lr = hp.lr if lr is None else lr
    state.t += 1
    state.m = _ema(state.m, g, hp.beta1)
    m2 = state.m * state.m
    state.v = _ema(state.v, m2, hp.beta2)
    state.gamma = _safe_root_ratio(m2 + hp.eps, state.v)
    arg = _ema(state.m, g, hp.beta1) if hp.nesterov else state.m
    x_new = _decay(x, lr, hp) - lr * state.gamma * np.sign(arg)
    return _finite_or_raise(x_new, state.t, "deva_linf")


# -- matrix methods -----------------------------------------------------------


def _polar(m, hp):
    if hp.msign == "exact":
        return msign_exact(m)
    return msign_newton_schulz(m, iters=hp.ns_iters)


def muon_step(state, x, g, hp, lr=None):
    x, g = _check(x, g, matrix=True)
    lr = hp.lr if lr is None else lr
    state.t += 1
    state.m = _ema(state.m, g, hp.beta1)
    arg = _ema(state.m, g, hp.beta1) if hp.nesterov else state.m
    direction = _polar(arg, hp)
    x_new = _decay(x, lr, hp) - lr * rms_alignment_scale(*x.shape) * direction
    return _finite_or_raise(x_new, state.t, "muon")


def refresh_eigenbases(state, beta3=None):
    """Update ``Q_L``/``Q_R`` from the factor EMAs ``L``/``R``.

    With no basis yet, both come from a full ``sym_eig``. Afterwards, on
    steps where ``t % freq == 0``, each basis takes one power-iteration step
    ``Q <- qr(F @ Q)``. A rank-deficient product keeps the previous basis.
    Returns True when a basis changed.
    """
    if state.frozen_basis:
        return False
    if state.Q_L is None or state.Q_R is None:
        state.Q_L = sym_eig(state.L).vectors
        state.Q_R = sym_eig(state.R).vectors
        return True
    if state.t % state.freq != 0:
        return False
    changed = False
    for factor, attr in ((state.L, "Q_L"), (state.R, "Q_R")):
        try:
            prev = getattr(state, attr)
            q = qr_orthonormalize(factor @ prev)
            # keep column orientation continuous so M and V stay meaningful
            flip = np.einsum("ij,ij->j", q, prev) < 0
            q[:, flip] *= -1.0
            setattr(state, attr, q)
            changed = True
        except DegenerateBasis as exc:
            log.warning("step %d: keeping previous %s (%s)", state.t, attr, exc)
    return changed


def _rotated_update(state, x, g, hp, lr, second_moment, name):
    """Shared pipeline of the DeVA matrix variants; ``second_moment`` maps
    ``(state, G_rot) -> (numerator, r c^T)`` for the adaptive weight."""
    x, g = _check(x, g, matrix=True)
    lr = hp.lr if lr is None else lr
    state.t += 1
    state.L = _ema(state.L, g @ g.T, hp.beta3)
    state.R = _ema(state.R, g.T @ g, hp.beta3)
    refresh_eigenbases(state)
    g_rot = state.Q_L.T @ g @ state.Q_R
    state.M = _ema(state.M, g_rot, hp.beta1)
    num, rc = second_moment(state, g_rot)
    # Gamma = (num / (rc + eps))^(-1/2)
    state.gamma = _safe_root_ratio(rc + hp.eps, num)
    arg = _ema(state.M, g_rot, hp.beta1) if hp.nesterov else state.M
    d_rot = state.gamma * _polar(arg, hp)
    step = state.Q_L @ d_rot @ state.Q_R.T
    x_new = _decay(x, lr, hp) - lr * rms_alignment_scale(*x.shape) * step
    return _finite_or_raise(x_new, state.t, name)


def _row_col_norms(m):
    return np.sqrt(np.einsum("ij,ij->i", m, m)), np.sqrt(np.einsum("ij,ij->j", m, m))


def deva_sinf_step(state, x, g, hp, lr=None):
    """Rotated-space msign step weighted by ``Gamma = sqrt((r c^T + eps) / V)``,
    where ``r``, ``c`` are row/column norms of the rotated momentum and ``V``
    is an EMA of ``r c^T``."""

    def second_moment(st, g_rot):
        r, c = _row_col_norms(st.M)
        rc = np.outer(r, c)
        st.V = _ema(st.V, rc, hp.beta2)
        return st.V, rc

    return _rotated_update(state, x, g, hp, lr, second_moment, "deva_sinf")


def deva_sinf_eff_step(state, x, g, hp, lr=None):
    """Like ``deva_sinf_step`` but keeps separate EMAs of ``r`` and ``c``
    (``n + m`` scalars) and uses their outer product in place of ``V``."""

    def second_moment(st, g_rot):
        r, c = _row_col_norms(st.M)
        st.V_r = _ema(st.V_r, r, hp.beta2)
        st.V_c = _ema(st.V_c, c, hp.beta2)
        return np.outer(st.V_r, st.V_c), np.outer(r, c)

    return _rotated_update(state, x, g, hp, lr, second_moment, "deva_sinf_eff")


def deva_sinf_inst_step(state, x, g, hp, lr=None):
    """Like ``deva_sinf_step`` but ``r`` and ``c`` come from the current
    rotated gradient instead of the momentum."""

    def second_moment(st, g_rot):
        r, c = _row_col_norms(g_rot)
        rc = np.outer(r, c)
        st.V = _ema(st.V, rc, hp.beta2)
        return st.V, rc

    return _rotated_update(state, x, g, hp, lr, second_moment, "deva_sinf_inst")


def soap_lite_step(state, x, g, hp, lr=None):
    """Adam in the eigenbasis of the Kronecker factors, rotated back."""
    x, g = _check(x, g, matrix=True)
    lr = hp.lr if lr is None else lr
    state.t += 1
    state.L = _ema(state.L, g @ g.T, hp.beta3)
    state.R = _ema(state.R, g.T @ g, hp.beta3)
    refresh_eigenbases(state)
    g_rot = state.Q_L.T @ g @ state.Q_R
    state.M = _ema(state.M, g_rot, hp.beta1)
    state.V = _ema(state.V, g_rot * g_rot, hp.beta2)
    m, v = state.M, state.V
    if hp.bias_correction:
        m = m / (1.0 - hp.beta1 ** state.t)
        v = v / (1.0 - hp.beta2 ** state.t)
    denom = np.sqrt(v) + hp.eps
    state.gamma = _safe_div(np.abs(m), denom)
    step = state.Q_L @ _safe_div(m, denom) @ state.Q_R.T
    return _finite_or_raise(_decay(x, lr, hp) - lr * step, state.t, "soap_lite")


# -- uniform front end ------------------------------------------------------------

_STEPS = {
    "signum": (MomentumState.zeros, signum_step),
    "adam": (VectorOptState.zeros, adam_step),
    "deva_linf": (VectorOptState.zeros, deva_linf_step),
    "muon": (MomentumState.zeros, muon_step),
    "soap_lite": (MatrixOptState.zeros, soap_lite_step),
    "deva_sinf": (MatrixOptState.zeros, deva_sinf_step),
    "deva_sinf_eff": (EffMatrixOptState.zeros, deva_sinf_eff_step),
    "deva_sinf_inst": (MatrixOptState.zeros, deva_sinf_inst_step),
}


@dataclass
class Optimizer:
    """One optimizer instance bound to a parameter shape."""

    kind: str
    hp: HyperParams
    shape: tuple
    state: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown optimizer kind {self.kind!r}")
        self.shape = tuple(self.shape)
        if self.kind in MATRIX_KINDS:
            _matrix_shape(self.shape)
        if self.state is None and self.kind != "gd":
            factory = _STEPS[self.kind][0]
            if self.kind in ("soap_lite", "deva_sinf", "deva_sinf_eff", "deva_sinf_inst"):
                self.state = factory(self.shape, freq=self.hp.freq)
            else:
                self.state = factory(self.shape)

    @property
    def is_matrix(self):
        return self.kind in MATRIX_KINDS

    def step(self, x, g, lr=None):
        if self.kind == "gd":
            return gd_step(x, g, self.hp, lr)
        return _STEPS[self.kind][1](self.state, x, g, self.hp, lr)

    def weights(self):
        """Current adaptive weights (gamma / Gamma); all ones for non-adaptive methods."""
        gamma = getattr(self.state, "gamma", None)
        if gamma is None:
            return np.ones(self.shape)
        return gamma


def make_optimizer(kind, shape, **hyper):
    """Build an ``Optimizer`` with family defaults overridden by ``hyper``."""
    known = {f.name for f in fields(HyperParams)}
    unknown = set(hyper) - known
    if unknown:
        raise InvalidConfig(f"unknown hyperparameters {sorted(unknown)}")
    return Optimizer(kind=kind, hp=default_hyperparams(kind, **hyper), shape=shape)


__all__ = [
    "EffMatrixOptState",
    "HyperParams",
    "KINDS",
    "MATRIX_KINDS",
    "MatrixOptState",
    "MomentumState",
    "Optimizer",
    "VECTOR_KINDS",
    "VectorOptState",
    "adam_step",
    "default_hyperparams",
    "deva_linf_step",
    "deva_sinf_eff_step",
    "deva_sinf_inst_step",
    "deva_sinf_step",
    "gd_step",
    "make_optimizer",
    "muon_step",
    "refresh_eigenbases",
    "schedule_lr",
    "signum_step",
    "soap_lite_step",
]
