import numpy as np

from mimo_lab._linalg import herm, hermitian_solve


def test_well_conditioned_matches_direct_solve():
    g = np.random.default_rng(0)
    X = g.standard_normal((5, 5)) + 1j * g.standard_normal((5, 5))
    A = herm(X @ X.conj().T + 5 * np.eye(5))
    B = g.standard_normal((5, 2)) + 1j * g.standard_normal((5, 2))
    sol, jittered = hermitian_solve(A, B)
    assert not jittered
    assert np.allclose(A @ sol, B, atol=1e-10)


def test_singular_matrix_gets_jitter_flag():
    u = np.array([1.0, 2.0, -1.0])[:, None]
    A = u @ u.T  # rank one, PSD
    sol, jittered = hermitian_solve(A, np.eye(3))
    assert jittered
    assert np.all(np.isfinite(sol))


def test_herm_symmetrizes():
    M = np.array([[1.0, 2.0 + 1j], [2.0 - 0.9j, 3.0]])
    H = herm(M)
    assert np.allclose(H, H.conj().T)
