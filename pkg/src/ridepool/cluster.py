"""Deterministic planar k-means for grouping requests and idle vehicles.

Hand-rolled rather than delegated so that every tie (seeding, nearest
centroid, empty-cluster repair) resolves by smallest point index and repeat
runs are bit-identical for a given seed.  Squared Euclidean distance on
pre-projected coordinates.
"""

from __future__ import annotations

import numpy as np

from .errors import InternalError

MAX_ITERS = 100


def _sq_dist(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = points - center
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; degenerate weight vectors fall back to index order."""
    n = len(points)
    chosen = [int(rng.integers(0, n))]
    d2 = _sq_dist(points, points[chosen[0]])
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining points coincide with a centroid: take the
            # smallest index not yet used
            used = set(chosen)
            nxt = next(i for i in range(n) if i not in used)
        else:
            r = float(rng.random()) * total
            acc = 0.0
            nxt = n - 1
            for i in range(n):
                acc += float(d2[i])
                if acc >= r:
                    nxt = i
                    break
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dist(points, points[nxt]))
    return points[chosen].astype(float).copy()


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels; ties go to the lowest centroid index."""
    dists = np.stack([_sq_dist(points, c) for c in centroids])
    return np.argmin(dists, axis=0)  # argmin returns the first minimum


def kmeans(points, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Cluster points (n, 2) into k groups; returns (labels, centroids).

    Deterministic for fixed inputs and seed.  k is clamped to the number of
    points.  Empty clusters are repaired by reseeding at the point farthest
    from its nearest centroid (smallest index on ties).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InternalError(f"kmeans expects (n, 2) points, got {pts.shape}")
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 2))
    k = max(1, min(int(k), n))
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(pts, k, rng)

    labels = _assign(pts, centroids)
    for _ in range(MAX_ITERS):
        for c in range(k):
            mask = labels == c
            if mask.any():
                centroids[c] = pts[mask].mean(axis=0)
            else:
                near = np.stack([_sq_dist(pts, cc) for cc in centroids]).min(axis=0)
                far = int(np.argmax(near))  # first maximum = smallest index
                centroids[c] = pts[far]
        new_labels = _assign(pts, centroids)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids


def cluster_medoids(points, labels: np.ndarray, centroids: np.ndarray) -> list[int]:
    """Index of the member closest to each centroid (smallest index on ties).

    Clusters with no members get -1.
    """
    pts = np.asarray(points, dtype=float)
    out = []
    for c in range(len(centroids)):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            out.append(-1)
            continue
        d = _sq_dist(pts[members], centroids[c])
        out.append(int(members[int(np.argmin(d))]))
    return out
