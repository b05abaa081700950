import numpy as np
import pytest
from hypothesis import given, strategies as st

from deva.errors import DegenerateBasis, InvalidInput, NotPositiveDefinite, ShapeMismatch
from deva.linalg import Rng, cholesky, kron, qr_orthonormalize, rng_gaussian, svd, sym_eig

dims = st.integers(min_value=1, max_value=32)
seeds = st.integers(min_value=0, max_value=2**64 - 1)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def orth_defect(q):
    return np.linalg.norm(q.T @ q - np.eye(q.shape[1]))


# -- svd ---------------------------------------------------------------------


def test_svd_identity():
    t = svd(np.eye(3))
    np.testing.assert_array_equal(t.s, [1, 1, 1])
    np.testing.assert_allclose(t.u, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(t.v, np.eye(3), atol=1e-15)


def test_svd_diagonal_sorted():
    np.testing.assert_allclose(svd(np.diag([3.0, 4.0])).s, [4.0, 3.0])


def test_svd_tall_reconstruction(rng):
    a = rng.gaussian((5, 3))
    t = svd(a)
    assert t.u.shape == (5, 3) and t.v.shape == (3, 3)
    assert rel_fro(t.u @ np.diag(t.s) @ t.v.T, a) <= 1e-9


def test_svd_matches_numpy_singular_values(rng):
    for shape in [(7, 4), (4, 7), (12, 12)]:
        a = rng.gaussian(shape)
        np.testing.assert_allclose(svd(a).s, np.linalg.svd(a, compute_uv=False), rtol=1e-12)


def test_svd_rank_deficient_keeps_orthonormal_factors(rng):
    b = rng.gaussian((6, 2))
    a = b @ rng.gaussian((2, 5))
    t = svd(a)
    assert np.all(t.s[2:] == 0.0)
    assert orth_defect(t.u) <= 1e-10 and orth_defect(t.v) <= 1e-10
    assert rel_fro(t.u @ np.diag(t.s) @ t.v.T, a) <= 1e-9


def test_svd_zero_matrix():
    t = svd(np.zeros((3, 2)))
    np.testing.assert_array_equal(t.s, [0.0, 0.0])
    assert orth_defect(t.u) <= 1e-12


@pytest.mark.parametrize("bad", [np.array([[1.0, np.nan]]), np.array([[np.inf]])])
def test_svd_rejects_non_finite(bad):
    with pytest.raises(InvalidInput):
        svd(bad)


def test_svd_rejects_vector():
    with pytest.raises(ShapeMismatch):
        svd(np.ones(3))


@given(n=dims, m=dims, seed=seeds)
def test_svd_invariants(n, m, seed):
    a = Rng(seed).gaussian((n, m))
    t = svd(a)
    r = min(n, m)
    assert t.u.shape == (n, r) and t.s.shape == (r,) and t.v.shape == (m, r)
    assert np.all(np.diff(t.s) <= 0) and np.all(t.s >= 0)
    assert orth_defect(t.u) <= 1e-10 and orth_defect(t.v) <= 1e-10
    assert rel_fro(t.u @ np.diag(t.s) @ t.v.T, a) <= 1e-9


def test_factorizations_thousand_random_inputs():
    """Reconstruction bounds for svd, sym_eig and cholesky on 1,000 random sizes up to 32."""
    rng = Rng(7)
    sizes = np.array(rng.integers(32, 2000)).reshape(1000, 2) + 1
    for n, m in sizes:
        a = rng.gaussian((n, m))
        t = svd(a)
        assert rel_fro(t.u @ np.diag(t.s) @ t.v.T, a) <= 1e-9
        assert orth_defect(t.u) <= 1e-10 and orth_defect(t.v) <= 1e-10
        g = a @ a.T
        e = sym_eig(g)
        assert rel_fro(e.vectors @ np.diag(e.values) @ e.vectors.T, g) <= 1e-9
        assert orth_defect(e.vectors) <= 1e-10
        c = cholesky(g + np.eye(n))
        assert rel_fro(c @ c.T, g + np.eye(n)) <= 1e-9


# -- sym_eig -------------------------------------------------------------------


def test_sym_eig_diagonal_is_permutation():
    e = sym_eig(np.diag([5.0, 2.0, 9.0]))
    np.testing.assert_array_equal(e.values, [9.0, 5.0, 2.0])
    np.testing.assert_array_equal(e.vectors, np.eye(3)[:, [2, 0, 1]])


def test_sym_eig_gram_of_diagonal():
    g = np.diag([1.0, 2.0])
    np.testing.assert_allclose(sym_eig(g @ g.T).values, [4.0, 1.0])


def test_sym_eig_random_reconstruction(rng):
    b = rng.gaussian((9, 9))
    a = b + b.T
    e = sym_eig(a)
    assert rel_fro(e.vectors @ np.diag(e.values) @ e.vectors.T, a) <= 1e-9
    np.testing.assert_allclose(e.values, np.linalg.eigvalsh(a)[::-1], atol=1e-12 * np.linalg.norm(a))


def test_sym_eig_rejects_non_square():
    with pytest.raises(ShapeMismatch):
        sym_eig(np.ones((2, 3)))


@given(n=dims, m=dims, seed=seeds)
def test_sym_eig_of_gram_equals_squared_singular_values(n, m, seed):
    g = Rng(seed).gaussian((n, m))
    lam = sym_eig(g @ g.T).values[: min(n, m)]
    s2 = svd(g).s ** 2
    np.testing.assert_allclose(lam, s2, rtol=1e-8, atol=1e-8 * s2[0])


def test_sign_convention_makes_largest_entry_nonnegative(rng):
    b = rng.gaussian((6, 6))
    v = sym_eig(b @ b.T).vectors
    idx = np.argmax(np.abs(v), axis=0)
    assert np.all(v[idx, np.arange(6)] > 0)


# -- qr / cholesky / kron --------------------------------------------------------


def test_qr_orthogonal_is_fixed_point():
    q = np.linalg.qr(np.random.default_rng(1).standard_normal((5, 5)))[0]
    out = qr_orthonormalize(q)
    np.testing.assert_allclose(np.abs(out), np.abs(q), atol=1e-12)
    np.testing.assert_allclose(np.abs(np.sum(out * q, axis=0)), 1.0, atol=1e-12)


def test_qr_removes_scaling():
    np.testing.assert_allclose(qr_orthonormalize(np.diag([2.0, 3.0])), np.eye(2), atol=1e-15)


def test_qr_random_is_orthonormal_and_spans_input(rng):
    a = rng.gaussian((6, 6))
    q = qr_orthonormalize(a)
    assert orth_defect(q) <= 1e-10
    r = q.T @ a
    np.testing.assert_allclose(np.tril(r, -1), 0.0, atol=1e-12)


def test_qr_rank_deficient_raises():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(DegenerateBasis):
        qr_orthonormalize(a)


def test_cholesky_examples(rng):
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    b = rng.gaussian((9, 9))
    a = b.T @ b + np.eye(9)
    c = cholesky(a)
    assert np.all(np.triu(c, 1) == 0)
    assert rel_fro(c @ c.T, a) <= 1e-9
    np.testing.assert_allclose(c, np.linalg.cholesky(a), rtol=1e-10, atol=1e-12)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_kron_examples(rng):
    np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))
    b = rng.gaussian((3, 3))
    np.testing.assert_array_equal(kron(np.array([[2.0]]), b), 2 * b)


@given(seed=seeds, p=st.integers(1, 4), q=st.integers(1, 4), r=st.integers(1, 4), s=st.integers(1, 4))
def test_kron_vec_identity(seed, p, q, r, s):
    rng = Rng(seed)
    a, b, x = rng.gaussian((p, q)), rng.gaussian((r, s)), rng.gaussian((q, s))
    lhs = kron(a, b) @ x.ravel()
    rhs = (a @ x @ b.T).ravel()
    bound = 1e-12 * np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(x)
    assert np.linalg.norm(lhs - rhs) <= bound


# -- rng ---------------------------------------------------------------------------


def test_rng_deterministic_and_seed_sensitive():
    np.testing.assert_array_equal(rng_gaussian(Rng(0), 4, 3), rng_gaussian(Rng(0), 4, 3))
    assert not np.array_equal(rng_gaussian(Rng(0), 4, 3), rng_gaussian(Rng(1), 4, 3))


def test_rng_splitmix_reference_values():
    # first outputs of splitmix64 seeded with 0, as published with the generator
    out = Rng(0).next_u64(3).tolist()
    assert out == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_rng_gaussian_moments():
    z = Rng(3).gaussian((100_000,))
    assert abs(z.mean()) < 0.02
    assert abs(z.var() - 1.0) < 0.05


def test_rng_uniform_range_and_integers_bounds():
    r = Rng(5)
    u = r.uniform(10_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    ints = r.integers(7, 10_000)
    assert set(ints) == set(range(7))
    counts = np.bincount(ints, minlength=7)
    assert counts.min() > 10_000 / 7 * 0.85


def test_rng_spawn_is_pure_and_distinct():
    r = Rng(11)
    a, b = r.spawn(1), r.spawn(1)
    np.testing.assert_array_equal(a.next_u64(4), b.next_u64(4))
    assert not np.array_equal(r.spawn(1).next_u64(4), r.spawn(2).next_u64(4))
