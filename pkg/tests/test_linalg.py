import numpy as np
import pytest

from eegstream.errors import NotPsdError
from eegstream.linalg import as_sym_matrix, inv_sqrt, sym_eig, trial_covariance


def brute_force_gram(x):
    """Independent O(C^2 T) reference for X X^T."""
    c, t = x.shape
    g = np.zeros((c, c))
    for i in range(c):
        for j in range(c):
            for k in range(t):
                g[i, j] += x[i, k] * x[j, k]
    return g


class TestTrialCovariance:
    def test_orthonormal_rows(self):
        np.testing.assert_allclose(trial_covariance(np.eye(2)), np.eye(2), atol=0)

    def test_scaling(self):
        np.testing.assert_allclose(trial_covariance(2.0 * np.eye(2)), 4.0 * np.eye(2), atol=0)

    def test_hand_product(self):
        x = np.array([[1.0, 1.0], [1.0, -1.0]])
        np.testing.assert_allclose(trial_covariance(x), [[2.0, 0.0], [0.0, 2.0]], atol=0)
        np.testing.assert_allclose(trial_covariance(x), brute_force_gram(x), atol=1e-12)

    def test_matches_brute_force_on_random(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            c = int(rng.integers(1, 9))
            t = int(rng.integers(1, 33))
            x = rng.standard_normal((c, t))
            np.testing.assert_allclose(trial_covariance(x), brute_force_gram(x), rtol=1e-12, atol=1e-12)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            trial_covariance(np.zeros((0, 5)))
        with pytest.raises(ValueError):
            trial_covariance(np.zeros((3, 0)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            trial_covariance(np.array([[np.nan, 1.0]]))

    def test_psd_property(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            c = int(rng.integers(1, 17))
            t = int(rng.integers(1, 65))
            g = trial_covariance(rng.standard_normal((c, t)))
            lam, _ = sym_eig(g)
            assert lam[0] >= -1e-10 * max(np.trace(g), 1e-30)


class TestSymEig:
    def test_diagonal(self):
        lam, v = sym_eig(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(lam, [4.0, 9.0], atol=0)
        np.testing.assert_allclose(np.abs(v), np.eye(2), atol=0)

    def test_identity(self):
        for n in (1, 3, 7):
            lam, _ = sym_eig(np.eye(n))
            np.testing.assert_allclose(lam, np.ones(n), atol=0)

    def test_two_by_two_characteristic_polynomial(self):
        # eigenvalues of [[2,1],[1,2]] are the roots of (2-l)^2 - 1
        lam, v = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(lam, [1.0, 3.0], atol=1e-14)
        s = 1.0 / np.sqrt(2.0)
        expected = np.array([[s, s], [-s, s]])
        # column signs are free
        for k in range(2):
            col = v[:, k]
            assert np.allclose(col, expected[:, k], atol=1e-14) or np.allclose(
                col, -expected[:, k], atol=1e-14
            )

    def test_reconstruction_on_random_matrices(self):
        rng = np.random.default_rng(13)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 33))
            a = rng.standard_normal((n, n))
            a = (a + a.T) / 2.0
            lam, v = sym_eig(a)
            rebuilt = (v * lam) @ v.T
            denom = max(np.linalg.norm(a), 1e-30)
            worst = max(worst, np.linalg.norm(rebuilt - a) / denom)
            assert np.linalg.norm(v.T @ v - np.eye(n)) < 1e-9
        assert worst < 1e-9

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            sym_eig(np.zeros((2, 3)))


class TestInvSqrt:
    def test_diagonal(self):
        w = inv_sqrt(np.diag([4.0, 9.0]), eps=0.0)
        np.testing.assert_allclose(w, np.diag([0.5, 1.0 / 3.0]), atol=1e-15)

    def test_identity(self):
        np.testing.assert_allclose(inv_sqrt(np.eye(4), eps=0.0), np.eye(4), atol=1e-15)

    def test_multiply_back(self):
        m = np.array([[2.0, 1.0], [1.0, 2.0]])
        w = inv_sqrt(m, eps=0.0)
        np.testing.assert_allclose(w @ m @ w, np.eye(2), atol=1e-10)

    def test_multiply_back_random_spd(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 17))
            q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            lam = rng.uniform(0.1, 10.0, size=n)
            m = as_sym_matrix((q * lam) @ q.T, tol=1e-9)
            w = inv_sqrt(m, eps=0.0)
            assert np.linalg.norm(w @ m @ w - np.eye(n)) < 1e-8

    def test_default_ridge_handles_singular(self):
        m = np.diag([1.0, 0.0])
        w = inv_sqrt(m)  # would be infinite with eps=0
        assert np.all(np.isfinite(w))

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(NotPsdError):
            inv_sqrt(np.diag([1.0, -0.5]), eps=0.0)

    def test_rejects_singular_with_zero_eps(self):
        with pytest.raises(NotPsdError):
            inv_sqrt(np.zeros((2, 2)), eps=0.0)

    def test_symmetric_output(self):
        rng = np.random.default_rng(19)
        x = rng.standard_normal((6, 50))
        w = inv_sqrt(trial_covariance(x))
        assert np.array_equal(w, w.T)


def test_as_sym_matrix_rejects_tolerance_violation():
    a = np.array([[1.0, 1.0], [1.0 + 1e-6, 1.0]])
    with pytest.raises(ValueError):
        as_sym_matrix(a)
