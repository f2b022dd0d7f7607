"""Cluster-balanced subset sampling and diversity matching.

Balanced sampling up-weights sparse clusters: clusters are picked uniformly at
random and an equal quota is drawn from each, so a cluster's share of the
sample does not track its share of the pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .diversity import EmbeddingMatrix, embedding_diversity, measure_e_vendi
from .errors import EmbedderUnavailable, InvalidK, InvalidTarget


@dataclass
class ClusterAssignment:
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) cluster index per row
    k: int
    inertia: float

    def members(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.assignments == c) for c in range(self.k)]


def _kmeans_pp_init(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    centroids = np.empty((k, vectors.shape[1]))
    first = rng.integers(n)
    centroids[0] = vectors[first]
    closest = np.sum((vectors - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centroids[c] = vectors[idx]
        closest = np.minimum(closest, np.sum((vectors - centroids[c]) ** 2, axis=1))
    return centroids


def kmeans(
    m: EmbeddingMatrix,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> ClusterAssignment:
    """Lloyd's k-means with seeded k-means++ initialization.

    Deterministic for a fixed (matrix, k, seed). Empty clusters are re-seeded
    from the point farthest from its current centroid.
    """
    vectors = m.vectors
    n = vectors.shape[0]
    if k < 1 or k > n:
        raise InvalidK(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(vectors, k, rng)
    assignments = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        dists = np.sum((vectors[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assignments = np.argmin(dists, axis=1)
        new_centroids = centroids.copy()
        point_dist = dists[np.arange(n), assignments]
        for c in range(k):
            mask = assignments == c
            if mask.any():
                new_centroids[c] = vectors[mask].mean(axis=0)
            else:
                farthest = int(np.argmax(point_dist))
                new_centroids[c] = vectors[farthest]
                assignments[farthest] = c
                point_dist[farthest] = 0.0
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    dists = np.sum((vectors[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assignments = np.argmin(dists, axis=1)
    inertia = float(dists[np.arange(n), assignments].sum())
    return ClusterAssignment(centroids=centroids, assignments=assignments, k=k, inertia=inertia)


def balanced_sample(
    clusters: ClusterAssignment, n_target: int, seed: int
) -> List[int]:
    """Equal-quota draws from uniformly picked clusters until n_target indices.

    Draws are without replacement; exhausted clusters are skipped; an overshoot
    of up to one quota is truncated uniformly at random. Deterministic for a
    fixed seed.
    """
    n = clusters.assignments.shape[0]
    if n_target < 0 or n_target > n:
        raise InvalidTarget(f"n_target={n_target} outside [0, {n}]")
    if n_target == 0:
        return []
    rng = np.random.default_rng(seed)
    quota = math.ceil(n_target / clusters.k)
    remaining = [list(idx) for idx in clusters.members()]
    selected: List[int] = []
    while len(selected) < n_target:
        available = [c for c in range(clusters.k) if remaining[c]]
        c = int(available[rng.integers(len(available))])
        pool = remaining[c]
        take = min(quota, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False)
        picked_values = [pool[i] for i in picks]
        for v in picked_values:
            pool.remove(v)
        selected.extend(picked_values)
    if len(selected) > n_target:
        keep = rng.choice(len(selected), size=n_target, replace=False)
        selected = [selected[i] for i in keep]
    return sorted(selected)


@dataclass
class MatchResult:
    k: int
    indices: List[int]
    score: float
    flagged: bool = False


def default_k_grid(n: int) -> List[int]:
    """Powers of 2 from 2 to 1024, capped at n // 2."""
    grid = [k for k in (2 ** p for p in range(1, 11)) if k <= max(n // 2, 1)]
    return grid or [1]


def match_diversity(
    pools: Mapping[str, Sequence[str]],
    target_pool_name: str,
    embedder,
    n_target: int,
    k_grid: Optional[Sequence[int]] = None,
    rel_tol: float = 0.01,
    seed: int = 0,
) -> Dict[str, MatchResult]:
    """Tune cluster counts so every pool's sample matches the target diversity.

    The target pool is sampled uniformly; for each other pool, k is searched
    over ``k_grid`` (ascending) and the first k whose balanced sample scores
    within ``rel_tol`` relative of the target wins. If none qualifies the
    closest k is returned with ``flagged=True``.
    """
    if target_pool_name not in pools:
        raise KeyError(f"unknown target pool {target_pool_name!r}")
    for name, texts in pools.items():
        if len(texts) < n_target:
            raise InvalidTarget(f"pool {name!r} smaller than n_target={n_target}")

    embeddings: Dict[str, EmbeddingMatrix] = {}
    for name, texts in pools.items():
        try:
            vectors = np.asarray(embedder.embed(list(texts)))
        except EmbedderUnavailable:
            raise
        except Exception as exc:
            raise EmbedderUnavailable(str(exc)) from exc
        embeddings[name] = EmbeddingMatrix(vectors=vectors, ids=[str(i) for i in range(len(texts))])

    rng = np.random.default_rng(seed)
    target_m = embeddings[target_pool_name]
    target_idx = sorted(rng.choice(target_m.n, size=n_target, replace=False).tolist())
    target_score = embedding_diversity(target_m.vectors[target_idx])

    results: Dict[str, MatchResult] = {
        target_pool_name: MatchResult(k=1, indices=target_idx, score=target_score)
    }
    for name, m in embeddings.items():
        if name == target_pool_name:
            continue
        grid = list(k_grid) if k_grid is not None else default_k_grid(m.n)
        best: Optional[MatchResult] = None
        for k in grid:
            if k > m.n:
                continue
            clusters = kmeans(m, k, seed)
            indices = balanced_sample(clusters, n_target, seed)
            score = embedding_diversity(m.vectors[indices])
            gap = abs(score - target_score) / target_score
            candidate = MatchResult(k=k, indices=indices, score=score)
            if gap <= rel_tol:
                best = candidate
                break
            if best is None or abs(best.score - target_score) > abs(score - target_score):
                best = candidate
                best.flagged = True
        assert best is not None
        results[name] = best
    return results
