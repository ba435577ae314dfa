"""Seeded k-means with k-means++ initialization (50 iterations by default)."""

from __future__ import annotations

import numpy as np


def kmeans_fit(
    points: np.ndarray, k: int, seed: int, iters: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster rows of `points` into k groups.

    Returns (centers [k x d], labels [n]). Deterministic given seed. Empty
    clusters are re-seeded at the point farthest from its assigned center.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"cannot fit {k} clusters to {n} points")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, pts.shape[1]), dtype=np.float64)
    centers[0] = pts[int(rng.integers(0, n))]
    closest = np.sum((pts - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[c] = pts[int(rng.integers(0, n))]
        else:
            probs = closest / total
            centers[c] = pts[int(rng.choice(n, p=probs))]
        closest = np.minimum(closest, np.sum((pts - centers[c]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for c in range(k):
            member = new_labels == c
            if member.any():
                centers[c] = pts[member].mean(axis=0)
            else:
                worst = int(d2[np.arange(n), new_labels].argmax())
                centers[c] = pts[worst]
                new_labels[worst] = c
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return centers, labels
