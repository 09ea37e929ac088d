import numpy as np
import pytest
from scipy.spatial.distance import cdist

from conftest import swiss_roll
from manifoldseg.errors import DisconnectedGraph
from manifoldseg.manifold import (
    FeatureMatrix,
    build_knn_graph,
    geodesic_distance_matrix,
    isomap_embed,
)


def test_collinear_points_recovered():
    fm = FeatureMatrix.from_array(np.arange(5.0))
    emb = isomap_embed(fm, 2, 1)
    coords = emb.coords.ravel()
    centered = np.arange(5.0) - 2.0
    assert np.allclose(coords, centered, atol=1e-9) or np.allclose(
        coords, -centered, atol=1e-9
    )


def test_equilateral_triangle_isometry():
    side = 2.5
    pts = side * np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    emb = isomap_embed(FeatureMatrix.from_array(pts), 2, 2)
    rec = cdist(emb.coords, emb.coords)
    assert np.allclose(rec, cdist(pts, pts), atol=1e-9)


def test_swiss_roll_geodesic_correlation():
    X, _ = swiss_roll(1000, seed=4)
    fm = FeatureMatrix.from_array(X)
    graph = build_knn_graph(fm, 12)
    gd = geodesic_distance_matrix(graph)
    emb = isomap_embed(fm, 12, 2)
    rec = cdist(emb.coords, emb.coords)
    iu = np.triu_indices(len(X), k=1)
    corr = np.corrcoef(rec[iu], gd[iu])[0, 1]
    assert corr > 0.99


def test_spectrum_recorded_descending():
    X, _ = swiss_roll(200, seed=1)
    emb = isomap_embed(FeatureMatrix.from_array(X), 8, 3)
    assert len(emb.eigen_spectrum) == 3
    assert np.all(np.diff(emb.eigen_spectrum) <= 1e-9)
    assert emb.method == "isomap"
    assert emb.params == {"k": 8, "d": 3}


def test_disconnected_propagates():
    fm = FeatureMatrix.from_array(
        np.concatenate([np.arange(5.0), np.arange(100.0, 105.0)])
    )
    with pytest.raises(DisconnectedGraph):
        isomap_embed(fm, 2, 1)


def test_permutation_invariance(rng):
    X = rng.normal(size=(60, 3))
    fm = FeatureMatrix.from_array(X)
    base = isomap_embed(fm, 8, 2).coords
    perm = rng.permutation(60)
    permuted = isomap_embed(FeatureMatrix.from_array(X[perm]), 8, 2).coords
    restored = np.empty_like(permuted)
    restored[perm] = permuted
    for j in range(2):
        col = restored[:, j]
        ref = base[:, j]
        assert np.allclose(col, ref, atol=1e-6) or np.allclose(
            col, -ref, atol=1e-6
        )
