import numpy as np
import pytest


def swiss_roll(n, seed=0):
    """Classic 3-D swiss roll with its unrolled 2-D parameters."""
    rng = np.random.default_rng(seed)
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    y = 21.0 * rng.random(n)
    X = np.stack([t * np.cos(t), y, t * np.sin(t)], axis=1)
    params = np.stack([t, y], axis=1)
    return X, params


def three_blobs(points_per_blob=30, dim=2, seed=0, sep=10.0, sigma=1.0):
    """Three Gaussian blobs with centers mutually sep apart."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, dim))
    centers[1, 0] = sep
    if dim == 1:
        centers[2, 0] = 2 * sep
    else:
        centers[2, 0] = sep / 2.0
        centers[2, 1] = sep * np.sqrt(3) / 2.0
    X = np.vstack([c + sigma * rng.normal(size=(points_per_blob, dim))
                   for c in centers])
    labels = np.repeat(np.arange(3), points_per_blob)
    return X, labels


def pairwise(X):
    from scipy.spatial.distance import cdist
    return cdist(X, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
