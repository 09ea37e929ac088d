"""Evidence-accumulation consensus clustering.

A K-means ensemble is run for every cluster count in [k1, k2], H times each
with independent derived seeds. Co-clustering frequencies accumulate into a
co-association matrix, and the consensus partition is the set of connected
components of the graph whose edges are pairs with co-association strictly
above a threshold (transitive merge).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _connected_components

from .errors import KTooLarge, MismatchedRunSizes

_MAX_LLOYD_ITER = 300


@dataclass
class KMeansRun:
    k: int
    seed: object
    labels: np.ndarray
    inertia: float


@dataclass
class CoassociationMatrix:
    """Symmetric matrix of co-clustering frequencies, normalized to [0, 1]."""

    values: np.ndarray
    run_count: int


@dataclass
class ConsensusResult:
    labels: np.ndarray
    cluster_count: int
    threshold: float
    sizes: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.sizes is None:
            self.sizes = np.bincount(self.labels, minlength=self.cluster_count)


def kmeans_run(points: np.ndarray, k: int, seed) -> KMeansRun:
    """One Lloyd K-means run with Forgy initialization.

    Centers start at k distinct data rows sampled uniformly. Iterations stop
    at an assignment fixpoint or after 300 rounds. An empty cluster is
    re-seeded with the point currently farthest from its assigned center.
    Deterministic for a given seed; inertia is checked to be non-increasing.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1 or k > n:
        raise KTooLarge(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centers = X[rng.choice(n, size=k, replace=False)].copy()

    labels = np.full(n, -1, dtype=np.int64)
    prev_inertia = np.inf
    for _ in range(_MAX_LLOYD_ITER):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        point_cost = d2[np.arange(n), new_labels]

        counts = np.bincount(new_labels, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if len(empties) > 0:
            selection = point_cost.copy()
            for empty in empties:
                far = int(np.argmax(selection))
                centers[empty] = X[far]
                new_labels[far] = empty
                point_cost[far] = 0.0
                selection[far] = -np.inf

        inertia = float(point_cost.sum())
        if inertia > prev_inertia * (1 + 1e-12) + 1e-12:
            raise AssertionError("K-means inertia increased across iterations")
        prev_inertia = inertia
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if np.any(members):
                centers[j] = X[members].mean(axis=0)
    return KMeansRun(k=k, seed=seed, labels=labels, inertia=prev_inertia)


def accumulate_coassociation(runs: list[KMeansRun]) -> CoassociationMatrix:
    """Fraction of runs in which each pair of points shares a cluster."""
    if not runs:
        raise MismatchedRunSizes("at least one run required")
    n = len(runs[0].labels)
    counts = np.zeros((n, n), dtype=np.int64)
    for run in runs:
        if len(run.labels) != n:
            raise MismatchedRunSizes(
                f"run over {len(run.labels)} points, expected {n}"
            )
        counts += run.labels[:, None] == run.labels[None, :]
    return CoassociationMatrix(
        values=counts / float(len(runs)), run_count=len(runs)
    )


def consensus_merge(sim: CoassociationMatrix, t: float) -> ConsensusResult:
    """Merge points whose co-association strictly exceeds t.

    Merging is transitive: the result is the connected components of the
    thresholded similarity graph, relabeled contiguously by first
    appearance.
    """
    S = sim.values
    n = S.shape[0]
    adj = csr_matrix(np.triu(S > t, k=1))
    _, comp = _connected_components(adj, directed=False)
    labels = _relabel_first_appearance(comp)
    count = int(labels.max()) + 1
    return ConsensusResult(labels=labels, cluster_count=count, threshold=t)


def _relabel_first_appearance(labels: np.ndarray) -> np.ndarray:
    order = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, v in enumerate(labels):
        v = int(v)
        if v not in order:
            order[v] = len(order)
        out[i] = order[v]
    return out


def derive_seed(master_seed, k: int, repetition: int) -> np.random.SeedSequence:
    """Independent, order-free sub-seed for ensemble run (k, repetition)."""
    return np.random.SeedSequence([int(master_seed), int(k), int(repetition)])


def consensus_cluster(
    points: np.ndarray,
    k1: int = 3,
    k2: int = 13,
    H: int = 10,
    t: float = 0.75,
    seed: int = 1,
) -> ConsensusResult:
    """Full ensemble: K-means for each k in [k1, k2], H repetitions each.

    run_count = H * (k2 - k1 + 1). Deterministic for a given master seed:
    every run's seed is derived from (seed, k, repetition), so execution
    order cannot change results.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not (1 <= k1 <= k2):
        raise ValueError(f"need 1 <= k1 <= k2, got k1={k1}, k2={k2}")
    if H < 1:
        raise ValueError(f"need H >= 1, got H={H}")
    # cluster counts cannot exceed the point count; clamp so tiny inputs
    # (down to a single point) still produce a trivial consensus
    lo, hi = min(k1, n), min(k2, n)
    runs = []
    for k in range(lo, hi + 1):
        for rep in range(H):
            runs.append(kmeans_run(X, k, derive_seed(seed, k, rep)))
    sim = accumulate_coassociation(runs)
    return consensus_merge(sim, t)
