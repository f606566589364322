"""Speaker clustering of clean-speech segments from per-segment embeddings.

Agglomerative clustering on cosine distance. Deterministic: among equally
close cluster pairs, the pair with the lowest (first, second) cluster index
merges first, where a cluster's index is its smallest member index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .formats import EmbeddingSet
from .timeline import Annotation, Segment
from .validation import check_embeddings

__all__ = [
    "ClusteringConfig",
    "cosine_similarity",
    "cosine_distance_matrix",
    "agglomerate",
    "ahc_cluster",
    "to_annotation",
    "CosineAHC",
]

LINKAGES = ("average", "complete", "single")


@dataclass(frozen=True)
class ClusteringConfig:
    linkage: str = "average"
    stop_distance: float = 0.48

    def __post_init__(self):
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}, got {self.linkage!r}")
        if not 0 <= self.stop_distance <= 2:
            raise ValueError("stop_distance must be in [0, 2]")


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity undefined for a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_similarity_matrix(A, B) -> np.ndarray:
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    return np.clip(A @ B.T, -1.0, 1.0)


def cosine_distance_matrix(X) -> np.ndarray:
    X = check_embeddings(X)
    D = 1.0 - cosine_similarity_matrix(X, X)
    np.fill_diagonal(D, 0.0)
    return D


def agglomerate(D: np.ndarray, linkage: str = "average", stop_distance: float = 0.48) -> np.ndarray:
    """Cluster from a precomputed distance matrix; returns a label per row.

    Labels are the smallest member index of each cluster, i.e. not yet
    renumbered. Merging continues while the closest pair is within
    ``stop_distance``.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    n = D.shape[0]
    dist = np.array(D, dtype=float, copy=True)
    np.fill_diagonal(dist, np.inf)
    dist[np.tril_indices(n)] = np.inf
    full = np.array(D, dtype=float, copy=True)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    labels = np.arange(n)
    for _ in range(n - 1):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n)
        if not dist[i, j] <= stop_distance:
            break
        # i < j always: only the upper triangle holds finite values.
        others = active.copy()
        others[[i, j]] = False
        if linkage == "average":
            new = (sizes[i] * full[i] + sizes[j] * full[j]) / (sizes[i] + sizes[j])
        elif linkage == "complete":
            new = np.maximum(full[i], full[j])
        else:
            new = np.minimum(full[i], full[j])
        full[i, :] = new
        full[:, i] = new
        sizes[i] += sizes[j]
        active[j] = False
        labels[labels == j] = i
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        idx = np.flatnonzero(others)
        lo, hi = idx[idx < i], idx[idx > i]
        dist[lo, i] = new[lo]
        dist[i, hi] = new[hi]
    return labels


def _canonical_names(raw: np.ndarray, order_keys) -> list[str]:
    first: dict[int, tuple] = {}
    for idx, lab in enumerate(raw):
        key = (order_keys[idx], idx)
        if lab not in first or key < first[lab]:
            first[lab] = key
    ranked = sorted(first, key=first.__getitem__)
    names = {lab: f"cluster_{k}" for k, lab in enumerate(ranked)}
    return [names[lab] for lab in raw]


def ahc_cluster(embeddings: EmbeddingSet, cfg: ClusteringConfig = ClusteringConfig()) -> dict[Segment, str]:
    """Cluster the segments of one document.

    Cluster ids are ``cluster_0 .. cluster_{k-1}`` numbered by the start of
    each cluster's earliest segment.
    """
    if len(embeddings) == 0:
        raise ValueError("need at least one embedding")
    if len(set(embeddings.segments)) != len(embeddings.segments):
        raise ValueError("duplicate segments in embedding set")
    D = cosine_distance_matrix(embeddings.vectors)
    raw = agglomerate(D, cfg.linkage, cfg.stop_distance)
    names = _canonical_names(raw, [s.start for s in embeddings.segments])
    return dict(zip(embeddings.segments, names))


def to_annotation(clusters: dict[Segment, str], segments) -> Annotation:
    segments = list(segments)
    if not segments:
        raise ValueError("no segments to label")
    missing = [s for s in segments if s not in clusters]
    if missing:
        raise KeyError(f"no cluster id for segment {missing[0]!r}")
    return Annotation((s, clusters[s]) for s in segments)


class CosineAHC(ClusterMixin, BaseEstimator):
    """Agglomerative clustering on cosine distance with a distance stop.

    Attributes
    ----------
    labels_ : ndarray of int
        Cluster index per sample, numbered by first occurrence.
    n_clusters_ : int
    """

    def __init__(self, linkage="average", stop_distance=0.48):
        self.linkage = linkage
        self.stop_distance = stop_distance

    def fit(self, X, y=None):
        ClusteringConfig(self.linkage, self.stop_distance)
        X = check_embeddings(X)
        raw = agglomerate(cosine_distance_matrix(X), self.linkage, self.stop_distance)
        _, first_idx, inverse = np.unique(raw, return_index=True, return_inverse=True)
        rank = np.argsort(np.argsort(first_idx))
        self.labels_ = rank[inverse]
        self.n_clusters_ = int(len(first_idx))
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
