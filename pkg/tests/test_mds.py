import numpy as np
import pytest
from scipy.spatial.distance import cdist

from manifoldseg.manifold import classical_mds


def jacobi_eigh(A, sweeps=100, tol=1e-14):
    """Cyclic Jacobi rotations; oracle for small symmetric eigenproblems."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = 0.5 * np.arctan2(2 * A[p, q], A[q, q] - A[p, p])
                c, s = np.cos(theta), np.sin(theta)
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    return np.diag(A), V


def test_two_point_symmetry():
    coords, vals = classical_mds(np.array([[0.0, 5.0], [5.0, 0.0]]), 1)
    assert sorted(coords.ravel()) == pytest.approx([-2.5, 2.5], abs=1e-12)
    assert vals[0] == pytest.approx(12.5, rel=1e-12)


def test_unit_square_recovery():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    D = cdist(pts, pts)
    coords, _ = classical_mds(D, 2)
    rec = cdist(coords, coords)
    assert np.allclose(rec, D, atol=1e-9)


def test_random_configuration_recovery(rng):
    for _ in range(10):
        X = rng.normal(size=(30, 3))
        D = cdist(X, X)
        coords, vals = classical_mds(D, 3)
        rec = cdist(coords, coords)
        mask = D > 0
        assert np.max(np.abs(rec[mask] - D[mask]) / D[mask]) < 1e-6
        assert np.all(np.diff(vals) <= 1e-9)  # descending spectrum


def test_negative_eigenvalues_clamped_but_reported():
    # L1-style distances on 4 points are not Euclidean-realizable in 3 dims
    D = np.array([
        [0, 2, 2, 2],
        [2, 0, 2, 2],
        [2, 2, 0, 2],
        [2, 2, 2, 0],
    ], dtype=float)
    # perturb one entry to force an indefinite Gram matrix
    D[0, 1] = D[1, 0] = 3.9
    coords, vals = classical_mds(D, 4)
    assert np.all(np.isfinite(coords))
    assert vals[-1] < 0  # distortion is visible in the spectrum
    assert np.all(coords[:, -1] == 0.0)  # clamped axis carries no spread


def test_embedding_dimension_validation():
    D = np.zeros((3, 3))
    with pytest.raises(ValueError):
        classical_mds(D, 0)
    with pytest.raises(ValueError):
        classical_mds(D, 4)


def test_eigh_matches_jacobi_oracle(rng):
    for n in range(2, 7):
        for _ in range(10):
            # well-separated spectrum so eigenvectors are identifiable
            vals = np.sort(rng.uniform(-5, 5, size=n))
            while np.min(np.diff(vals)) < 0.2:
                vals = np.sort(rng.uniform(-5, 5, size=n))
            Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            A = Q @ np.diag(vals) @ Q.T
            A = 0.5 * (A + A.T)
            ref_vals, ref_vecs = jacobi_eigh(A)
            got_vals, got_vecs = np.linalg.eigh(A)
            order_ref = np.argsort(ref_vals)
            assert np.allclose(got_vals, ref_vals[order_ref], atol=1e-8)
            for j in range(n):
                v_ref = ref_vecs[:, order_ref[j]]
                v_got = got_vecs[:, j]
                assert abs(abs(np.dot(v_ref, v_got)) - 1.0) < 1e-8
