"""Cluster-balanced sampling and diversity matching on a synthetic pool.

A pool where one dense cluster holds 91% of the points: uniform sampling
mirrors the skew, balanced sampling up-weights the sparse clusters, and
diversity matching tunes the cluster count so two pools score alike.

Run: python3 demos/diversity_sampling.py
"""

import numpy as np

from promptgap import (
    EmbeddingMatrix,
    balanced_sample,
    embedding_diversity,
    kmeans,
    match_diversity,
)


def clustered_pool(sizes, noise=0.03, dim=64, seed=0):
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((len(sizes), dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    blocks = []
    for c, size in enumerate(sizes):
        v = dirs[c] + noise * rng.standard_normal((size, dim))
        blocks.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    return np.vstack(blocks)


# --- 1. Balanced vs uniform sampling ---------------------------------------

pool = clustered_pool([910] + [10] * 9)
m = EmbeddingMatrix(vectors=pool, ids=[str(i) for i in range(len(pool))])
clusters = kmeans(m, 10, seed=0)

rng = np.random.default_rng(0)
uniform_idx = sorted(rng.choice(1000, size=100, replace=False).tolist())
balanced_idx = balanced_sample(clusters, 100, seed=0)

print("pool: 1000 points, one cluster holds 910 of them")
print(f"uniform sample diversity:  {embedding_diversity(pool[uniform_idx]):.3f}")
print(f"balanced sample diversity: {embedding_diversity(pool[balanced_idx]):.3f}")
dense_uniform = sum(i < 910 for i in uniform_idx)
dense_balanced = sum(i < 910 for i in balanced_idx)
print(f"dense-cluster share: uniform {dense_uniform}/100, balanced {dense_balanced}/100")

# --- 2. Matching one pool's diversity to another ---------------------------


class LookupEmbedder:
    def __init__(self, table):
        self.table = table

    def embed(self, texts):
        return np.array([self.table[t] for t in texts])


diverse = clustered_pool([8] * 40, seed=1)       # 40 evenly-sized clusters
skewed = clustered_pool([200] + [4] * 40, seed=2)  # one template dominates

table = {}
pools = {}
for name, vectors in (("diverse", diverse), ("skewed", skewed)):
    texts = [f"{name}-{i}" for i in range(len(vectors))]
    table.update(zip(texts, vectors))
    pools[name] = texts

results = match_diversity(pools, "diverse", LookupEmbedder(table),
                          n_target=80, k_grid=list(range(2, 61)), seed=0)
for name, r in results.items():
    flag = "  (closest reachable)" if r.flagged else ""
    print(f"{name:8s} k={r.k:3d} diversity={r.score:.3f}{flag}")
