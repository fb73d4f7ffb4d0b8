"""K-means over predicted rating rows and the unified preference vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from banditmf.errors import BanditMFError
from banditmf.seeding import derive_seed

# Relative slack for the per-iteration monotonicity check.
_MONOTONE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Result of the best k-means restart.

    Cluster ids are canonical: ordered by descending size, then by the
    lexicographic order of the centroid.
    """

    k_clusters: int
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    best_restart: int = 0
    history: tuple = field(default=(), repr=False)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k_clusters)


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], C.shape[0]))
    for c in range(C.shape[0]):
        diff = X - C[c]
        out[:, c] = np.einsum("ij,ij->i", diff, diff)
    return out


def _means(X, labels, k):
    C = np.zeros((k, X.shape[1]))
    for c in range(k):
        C[c] = X[labels == c].mean(axis=0)
    return C


def _inertia(X, C, labels) -> float:
    diff = X - C[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _repair_empty(X, C, labels, d2, k):
    """Give each empty cluster the point farthest from its centroid."""
    counts = np.bincount(labels, minlength=k)
    own = d2[np.arange(len(labels)), labels]
    for c in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        candidates = np.where(movable, own, -np.inf)
        i = int(np.argmax(candidates))
        counts[labels[i]] -= 1
        labels[i] = c
        counts[c] = 1
        own[i] = 0.0
    return labels


def lloyd(X: np.ndarray, init: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations from the given centroids.

    Returns ``(labels, centroids, inertia_per_iteration)``; stops when the
    assignment reaches a fixpoint or after ``max_iter`` updates.
    """
    k = init.shape[0]
    C = init.copy()
    labels = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _sq_dist(X, C)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(X, C, new, d2, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = _means(X, labels, k)
        value = _inertia(X, C, labels)
        if history and value > history[-1] * (1 + _MONOTONE_RTOL) + 1e-300:
            raise AssertionError(f"k-means inertia increased: {history[-1]!r} -> {value!r}")
        history.append(value)
    return labels, C, history


def _canonical(X, labels, k):
    C = _means(X, labels, k)
    sizes = np.bincount(labels, minlength=k)
    keys = [(-int(sizes[c]), tuple(C[c].tolist())) for c in range(k)]
    order = sorted(range(k), key=lambda c: keys[c])
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(k)
    labels = relabel[labels]
    return labels, _means(X, labels, k)


def kmeans(
    rows: np.ndarray,
    k_clusters: int = 3,
    n_init: int = 20,
    max_iter: int = 300,
    seed: int = 0,
) -> ClusterModel:
    """Best-of-``n_init`` Lloyd's k-means under Euclidean distance.

    Each restart draws ``k_clusters`` distinct rows as initial centroids,
    indexing into the lexicographically sorted rows so that the result does
    not depend on input row order. The restart with the lowest inertia wins
    (ties: lowest restart index).
    """
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise BanditMFError("rows must be a 2-d matrix")
    m = X.shape[0]
    if not 1 <= k_clusters <= m:
        raise BanditMFError(f"k_clusters={k_clusters} must lie in [1, {m}]")
    if n_init < 1 or max_iter < 1:
        raise BanditMFError("n_init and max_iter must be >= 1")

    sorted_rows = np.lexsort(X.T[::-1])
    best = None
    histories = []
    for r in range(n_init):
        rng = np.random.default_rng(derive_seed(seed, "kmeans-restart", r))
        picks = sorted_rows[rng.choice(m, size=k_clusters, replace=False)]
        labels, C, history = lloyd(X, X[picks], max_iter)
        histories.append(tuple(history))
        if best is None or history[-1] < best[0]:
            best = (history[-1], r, labels)

    _, best_r, labels = best
    labels, C = _canonical(X, labels, k_clusters)
    return ClusterModel(k_clusters, labels, C, _inertia(X, C, labels), best_r, tuple(histories))


def unified_ratings(cluster: ClusterModel) -> np.ndarray:
    """One row per cluster: the mean of its members' predicted rating rows."""
    return np.array(cluster.centroids, dtype=np.float64, copy=True)


def cluster_from_assignment(rows: np.ndarray, assignment, k_clusters: int | None = None) -> ClusterModel:
    """ClusterModel for a given partition, centroids as member means (no relabeling)."""
    X = np.asarray(rows, dtype=np.float64)
    labels = np.asarray(assignment, dtype=np.int64)
    k = int(labels.max()) + 1 if k_clusters is None else k_clusters
    if np.any(np.bincount(labels, minlength=k) == 0):
        raise BanditMFError("every cluster needs at least one member")
    C = _means(X, labels, k)
    return ClusterModel(k, labels, C, _inertia(X, C, labels))
