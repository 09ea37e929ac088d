"""Nonlinear dimensionality reduction over per-voxel feature vectors.

Three embeddings are provided. Isomap preserves pairwise geodesic distances
estimated by shortest paths over a k-nearest-neighbor graph, then applies
classical multidimensional scaling. Locally linear embedding reconstructs
each point as an affine combination of its graph neighbors and finds the
low-dimensional coordinates that preserve those weights. Diffusion maps
build a Gaussian-kernel Markov transition matrix and embed with its leading
nontrivial eigenvectors scaled by powers of their eigenvalues.

All outputs are deterministic: eigenvectors are sign-fixed so that the
largest-magnitude entry of each is positive, neighbor ties are broken by
lower point id, and heavy loops run over fixed-size blocks (see parallel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _connected_components
from scipy.sparse.csgraph import dijkstra as _dijkstra
from scipy.spatial.distance import cdist

from . import parallel
from .errors import DisconnectedGraph, EmptyLandmarks, KTooLarge, SigmaNonPositive

# Zero-length edges (coincident points) are stored with this stand-in weight
# so sparse shortest-path routines do not drop them.
_ZERO_EDGE = np.nextafter(0.0, 1.0)


@dataclass
class FeatureMatrix:
    """n x D matrix of per-voxel feature vectors.

    voxel_index maps each row back to its (x, y) grid coordinate;
    channel_names labels the D columns.
    """

    data: np.ndarray
    voxel_index: np.ndarray
    channel_names: list[str]

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("feature matrix must be 2-D and nonempty")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix contains NaN or Inf")
        self.voxel_index = np.ascontiguousarray(self.voxel_index, dtype=np.int64)
        if self.voxel_index.shape != (self.data.shape[0], 2):
            raise ValueError("voxel_index must have one (x, y) pair per row")
        if len(self.channel_names) != self.data.shape[1]:
            raise ValueError("one channel name per column required")

    @classmethod
    def from_array(cls, data, channel_names=None):
        """Wrap a bare array; rows index themselves as (i, 0)."""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        n, d = data.shape
        idx = np.stack([np.arange(n), np.zeros(n, dtype=np.int64)], axis=1)
        names = channel_names or [f"f{j}" for j in range(d)]
        return cls(data=data, voxel_index=idx, channel_names=list(names))

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass
class NeighborGraph:
    """Union-symmetrized kNN graph with Euclidean edge weights.

    edges_a < edges_b hold each undirected edge once.
    """

    n: int
    k: int
    edges_a: np.ndarray
    edges_b: np.ndarray
    weights: np.ndarray

    def to_csr(self) -> csr_matrix:
        w = np.where(self.weights > 0, self.weights, _ZERO_EDGE)
        rows = np.concatenate([self.edges_a, self.edges_b])
        cols = np.concatenate([self.edges_b, self.edges_a])
        data = np.concatenate([w, w])
        return csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def adjacency(self) -> list[np.ndarray]:
        """Sorted neighbor ids per node."""
        nbrs = [[] for _ in range(self.n)]
        for a, b in zip(self.edges_a, self.edges_b):
            nbrs[a].append(b)
            nbrs[b].append(a)
        return [np.asarray(sorted(v), dtype=np.int64) for v in nbrs]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges_a, 1)
        np.add.at(deg, self.edges_b, 1)
        return deg

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in zip(self.edges_a, self.edges_b)}


@dataclass
class Embedding:
    """Low-dimensional coordinates, row-aligned with the source features."""

    coords: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    eigen_spectrum: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            out[:, j] = -col
    return out


def build_knn_graph(features: FeatureMatrix, k: int) -> NeighborGraph:
    """Connect each point to its k nearest neighbors, then symmetrize by union.

    Ties at the k-th distance are broken by lower point id. Edge weights are
    exact Euclidean distances between the endpoint feature rows.
    """
    X = features.data
    n = X.shape[0]
    if k < 1 or k >= n:
        raise KTooLarge(f"need 1 <= k < n, got k={k}, n={n}")

    nbr = np.empty((n, k), dtype=np.int64)
    wts = np.empty((n, k))

    def run(a, b):
        d = cdist(X[a:b], X)
        d[np.arange(b - a), np.arange(a, b)] = np.inf
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        nbr[a:b] = order
        wts[a:b] = np.take_along_axis(d, order, axis=1)

    parallel.map_blocks(run, n)

    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = nbr.ravel()
    w = wts.ravel()
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    key = lo * n + hi
    _, first = np.unique(key, return_index=True)
    return NeighborGraph(
        n=n, k=k, edges_a=lo[first], edges_b=hi[first], weights=w[first]
    )


def graph_components(graph: NeighborGraph) -> np.ndarray:
    """Connected-component label per node."""
    _, labels = _connected_components(graph.to_csr(), directed=False)
    return labels


def geodesic_distance_matrix(graph: NeighborGraph) -> np.ndarray:
    """All-pairs shortest-path distances over the weighted neighbor graph.

    Raises DisconnectedGraph (with component sizes) when any pair is
    unreachable. The result is exactly symmetric with a zero diagonal.
    """
    labels = graph_components(graph)
    n_comp = labels.max() + 1
    if n_comp > 1:
        sizes = np.bincount(labels)
        raise DisconnectedGraph(sorted((int(s) for s in sizes), reverse=True))
    csr = graph.to_csr()
    n = graph.n
    dist = np.empty((n, n))

    def run(a, b):
        dist[a:b] = _dijkstra(csr, directed=False, indices=np.arange(a, b))

    parallel.map_blocks(run, n, block=128)
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


def classical_mds(dist: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Classical MDS of a symmetric distance matrix.

    Double-centers the squared distances, takes the top-d eigenpairs of the
    resulting Gram matrix, and scales eigenvectors by the square roots of
    their eigenvalues (negative eigenvalues are clamped to zero, but reported
    unclamped in the returned spectrum so distortion stays visible).

    Returns (coords, eigenvalues) with eigenvalues descending.
    """
    D = np.asarray(dist, dtype=np.float64)
    n = D.shape[0]
    if d < 1 or d > n:
        raise ValueError(f"need 1 <= d <= n, got d={d}, n={n}")
    D2 = D * D
    row = D2.mean(axis=1, keepdims=True)
    col = D2.mean(axis=0, keepdims=True)
    grand = D2.mean()
    B = -0.5 * (D2 - row - col + grand)
    B = 0.5 * (B + B.T)
    vals, vecs = np.linalg.eigh(B)
    idx = np.argsort(vals, kind="stable")[::-1][:d]
    vals = vals[idx]
    vecs = _fix_signs(vecs[:, idx])
    coords = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return coords, vals


def isomap_embed(features: FeatureMatrix, k: int, d: int) -> Embedding:
    """Geodesic-preserving embedding: kNN graph -> shortest paths -> MDS."""
    graph = build_knn_graph(features, k)
    gd = geodesic_distance_matrix(graph)
    coords, spectrum = classical_mds(gd, d)
    return Embedding(
        coords=coords,
        method="isomap",
        params={"k": k, "d": d},
        eigen_spectrum=spectrum,
    )


def lle_weights(features: FeatureMatrix, graph: NeighborGraph, reg: float = 1e-3) -> csr_matrix:
    """Barycentric reconstruction weights over graph neighborhoods.

    Row i minimizes ||x_i - sum_j W_ij x_j||^2 over the neighbors of i,
    subject to the weights summing to 1. Each local Gram matrix is
    regularized by reg * trace before solving, which keeps the system
    solvable when the neighborhood is larger than the local dimension (at
    the cost of a reconstruction residual of order reg; pass a tiny reg for
    near-exact reconstruction on noiseless data).
    """
    X = features.data
    n = X.shape[0]
    adj = graph.adjacency()
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i, nbrs in enumerate(adj):
        if len(nbrs) == 0:
            raise ValueError(f"node {i} has no neighbors")
        indptr[i + 1] = indptr[i] + len(nbrs)
    indices = np.concatenate(adj)
    data = np.empty(indptr[-1])

    def run(a, b):
        for i in range(a, b):
            nbrs = adj[i]
            Z = X[nbrs] - X[i]
            G = Z @ Z.T
            trace = np.trace(G)
            G = G + (reg * trace if trace > 0 else reg) * np.eye(len(nbrs))
            w = np.linalg.solve(G, np.ones(len(nbrs)))
            data[indptr[i]:indptr[i] + len(nbrs)] = w / w.sum()

    parallel.map_blocks(run, n)
    return csr_matrix((data, indices, indptr), shape=(n, n))


def lle_embed(features: FeatureMatrix, k: int, d: int, reg: float = 1e-3) -> Embedding:
    """Locally linear embedding from barycentric weights.

    Takes the d eigenvectors of M = (I-W)^T (I-W) with the smallest nonzero
    eigenvalues (the near-zero constant eigenvector is discarded), each
    scaled by sqrt(n). The recorded spectrum is ascending.
    """
    graph = build_knn_graph(features, k)
    labels = graph_components(graph)
    if labels.max() > 0:
        sizes = np.bincount(labels)
        raise DisconnectedGraph(sorted((int(s) for s in sizes), reverse=True))
    W = lle_weights(features, graph, reg=reg)
    n = features.n
    if d > n - 1:
        raise ValueError(f"need d <= n - 1, got d={d}, n={n}")
    IW = np.eye(n) - W.toarray()
    M = IW.T @ IW
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    take = slice(1, d + 1)
    coords = _fix_signs(vecs[:, take]) * np.sqrt(n)
    return Embedding(
        coords=coords,
        method="lle",
        params={"k": k, "d": d, "reg": reg},
        eigen_spectrum=vals[take],
    )


def diffusion_transition_matrix(features: FeatureMatrix, sigma: float) -> np.ndarray:
    """Row-stochastic Markov matrix from a Gaussian kernel exp(-dist^2/sigma^2)."""
    if sigma <= 0:
        raise SigmaNonPositive(f"sigma must be positive, got {sigma}")
    d2 = cdist(features.data, features.data, metric="sqeuclidean")
    K = np.exp(-d2 / (sigma * sigma))
    return K / K.sum(axis=1, keepdims=True)


def diffusion_map_embed(
    features: FeatureMatrix, sigma: float, d: int, t: int = 1
) -> Embedding:
    """Diffusion-map embedding of the Gaussian-kernel random walk.

    Coordinate m (m = 1..d) is lambda_m^t * psi_m, where (lambda_m, psi_m)
    are the eigenpairs of the transition matrix sorted by descending
    eigenvalue and the trivial pair (lambda_0 = 1, constant psi_0) is
    skipped. Eigenvectors are unit-norm and sign-fixed. The eigenproblem is
    solved through the symmetric conjugate of the transition matrix.
    """
    if sigma <= 0:
        raise SigmaNonPositive(f"sigma must be positive, got {sigma}")
    if t < 1:
        raise ValueError(f"diffusion time must be >= 1, got {t}")
    X = features.data
    n = X.shape[0]
    if d < 1 or d > n - 1:
        raise ValueError(f"need 1 <= d <= n - 1, got d={d}, n={n}")
    d2 = cdist(X, X, metric="sqeuclidean")
    K = np.exp(-d2 / (sigma * sigma))
    rowsum = K.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(rowsum)
    S = K * inv_sqrt[:, None] * inv_sqrt[None, :]
    S = 0.5 * (S + S.T)
    vals, U = np.linalg.eigh(S)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = vals[order]
    psi = inv_sqrt[:, None] * U[:, order]
    psi /= np.linalg.norm(psi, axis=0, keepdims=True)
    psi = _fix_signs(psi)
    lam = vals[1:d + 1]
    coords = psi[:, 1:d + 1] * (lam ** t)
    return Embedding(
        coords=coords,
        method="diffusion",
        params={"sigma": sigma, "d": d, "t": t},
        eigen_spectrum=lam,
    )


def out_of_sample_extend(
    landmark_features: FeatureMatrix,
    landmark_embedding: Embedding,
    query_features: FeatureMatrix,
    k: int,
) -> Embedding:
    """Extend a landmark embedding to query points.

    Each query gets the average of its k nearest landmarks' coordinates,
    weighted by normalized inverse feature-space distance. A query that
    coincides with a landmark receives that landmark's row exactly.
    """
    L = landmark_features.data
    m = L.shape[0]
    if m == 0:
        raise EmptyLandmarks("landmark set is empty")
    if k < 1 or k > m:
        raise ValueError(f"need 1 <= k <= landmark count, got k={k}, m={m}")
    Q = query_features.data
    nq = Q.shape[0]
    emb = landmark_embedding.coords
    out = np.empty((nq, emb.shape[1]))

    def run(a, b):
        dists = cdist(Q[a:b], L)
        order = np.argsort(dists, axis=1, kind="stable")[:, :k]
        dk = np.take_along_axis(dists, order, axis=1)
        block = np.empty((b - a, emb.shape[1]))
        exact = dk[:, 0] == 0.0
        if np.any(exact):
            block[exact] = emb[order[exact, 0]]
        rest = ~exact
        if np.any(rest):
            w = 1.0 / dk[rest]
            w /= w.sum(axis=1, keepdims=True)
            block[rest] = np.einsum("qk,qkd->qd", w, emb[order[rest]])
        out[a:b] = block

    parallel.map_blocks(run, nq)
    params = dict(landmark_embedding.params)
    params["extension_k"] = k
    return Embedding(
        coords=out,
        method=landmark_embedding.method,
        params=params,
        eigen_spectrum=landmark_embedding.eigen_spectrum,
    )


def connect_components(features: FeatureMatrix, graph: NeighborGraph) -> NeighborGraph:
    """Bridge a disconnected graph by linking closest cross-component pairs.

    Components are merged single-linkage style: repeatedly add an edge
    between the globally closest pair of points lying in different
    components (ties broken by lowest point ids). Within-component
    geodesics are unchanged; cross-component paths become finite with
    lengths at least the true feature-space separation.
    """
    labels = graph_components(graph)
    n_comp = labels.max() + 1
    if n_comp == 1:
        return graph
    X = features.data
    ea = list(graph.edges_a)
    eb = list(graph.edges_b)
    w = list(graph.weights)
    labels = labels.copy()
    while n_comp > 1:
        best = (np.inf, -1, -1)
        for ca in range(int(labels.max()) + 1):
            ia = np.flatnonzero(labels == ca)
            if len(ia) == 0:
                continue
            for cb in range(ca + 1, int(labels.max()) + 1):
                ib = np.flatnonzero(labels == cb)
                if len(ib) == 0:
                    continue
                d = cdist(X[ia], X[ib])
                flat = int(np.argmin(d))
                r, c = divmod(flat, d.shape[1])
                cand = (float(d[r, c]), int(ia[r]), int(ib[c]))
                if cand < best:
                    best = cand
        dist, i, j = best
        ea.append(min(i, j))
        eb.append(max(i, j))
        w.append(dist)
        labels[labels == labels[j]] = labels[i]
        n_comp -= 1
    return NeighborGraph(
        n=graph.n,
        k=graph.k,
        edges_a=np.asarray(ea, dtype=np.int64),
        edges_b=np.asarray(eb, dtype=np.int64),
        weights=np.asarray(w),
    )
