"""Embedding-based diversity scoring.

The diversity score of a sample is the exponential of the Shannon entropy of
the eigenvalues of its cosine-similarity kernel divided by n. It ranges from 1
(all vectors identical) to n (orthonormal vectors).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import EmbedderUnavailable, NotPSD, ZeroVector


@dataclass
class EmbeddingMatrix:
    """Dense vectors for a prompt pool, rows aligned with ids."""

    vectors: np.ndarray  # (n, d)
    ids: List[str]
    normalized: bool = False

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1 or self.vectors.shape[1] < 1:
            raise ValueError("vectors must be a non-empty 2-D array")
        if self.vectors.shape[0] != len(self.ids):
            raise ValueError("row count must equal id count")
        if self.normalized:
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("normalized flag set but rows are not unit-norm")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def cosine_kernel(m: EmbeddingMatrix) -> np.ndarray:
    """n x n cosine-similarity matrix; unit diagonal, symmetric."""
    norms = np.linalg.norm(m.vectors, axis=1)
    if np.any(norms == 0):
        bad = [m.ids[i] for i in np.flatnonzero(norms == 0)[:5]]
        raise ZeroVector(f"zero-norm embedding rows: {bad}")
    unit = m.vectors / norms[:, None]
    kernel = unit @ unit.T
    kernel = (kernel + kernel.T) / 2
    np.fill_diagonal(kernel, 1.0)
    return kernel


def vendi_score(kernel: np.ndarray) -> float:
    """exp(entropy) of the eigenvalues of kernel / n.

    Eigenvalues are clamped at 0 and renormalized to sum 1; small PSD
    violations are tolerated up to -1e-6 * n.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    n = kernel.shape[0]
    eigs = np.linalg.eigvalsh(kernel)
    if eigs.min() < -1e-6 * n:
        raise NotPSD(f"most-negative eigenvalue {eigs.min():.3e} exceeds tolerance")
    lam = np.clip(eigs / n, 0.0, None)
    lam = lam / lam.sum()
    nz = lam[lam > 0]
    entropy = float(-np.sum(nz * np.log(nz)))
    return float(np.exp(entropy))


def embedding_diversity(vectors: np.ndarray) -> float:
    """Diversity score of a raw embedding array (rows = samples)."""
    m = EmbeddingMatrix(vectors=vectors, ids=[str(i) for i in range(len(vectors))])
    return vendi_score(cosine_kernel(m))


def measure_e_vendi(
    texts: Sequence[str],
    embedder,
    subset_size: int = 10000,
    seed: int = 0,
) -> float:
    """Diversity of a uniformly sampled subset of a text pool.

    ``embedder`` must expose ``embed(texts) -> array``. Deterministic for a
    fixed seed and embedder.
    """
    if not texts:
        raise ValueError("pool must be non-empty")
    rng = np.random.default_rng(seed)
    size = min(subset_size, len(texts))
    idx = np.sort(rng.choice(len(texts), size=size, replace=False))
    try:
        vectors = np.asarray(embedder.embed([texts[i] for i in idx]))
    except EmbedderUnavailable:
        raise
    except Exception as exc:
        raise EmbedderUnavailable(str(exc)) from exc
    return embedding_diversity(vectors)


_HEADER = struct.Struct("<qq")  # n, d as 64-bit little-endian integers


def write_embeddings(path, vectors: np.ndarray) -> None:
    """Write a matrix as [n, d] int64 header + row-major float32 data."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_embeddings(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, d = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != n * d:
        raise ValueError(f"expected {n * d} floats, found {data.size}")
    return data.reshape(n, d).astype(np.float64)
