"""Token-embedding providers for the greedy embedding-match metric.

The metric itself is embedder-agnostic; these providers cover testing
(deterministic hash / one-hot vectors) and a remote embedding service.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Sequence

import httpx
import numpy as np


class HashedGaussianEmbedder:
    """Deterministic per-token unit vectors derived from a SHA-256 digest.

    Identical tokens map to identical vectors across processes, so runs
    that enable the embedding metric stay reproducible.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        self._cache[token] = vec
        return vec

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._vector(tok) for tok in tokens])


class OneHotEmbedder:
    """Orthogonal unit vector per distinct token, assigned on first sight.

    Mainly for tests: disjoint token sets score exactly zero.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self._index: dict[str, int] = {}
        self._lock = threading.Lock()

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        with self._lock:
            for row, tok in enumerate(tokens):
                idx = self._index.get(tok)
                if idx is None:
                    if len(self._index) >= self.dim:
                        raise ValueError(f"one-hot vocabulary exceeds dim={self.dim}")
                    idx = len(self._index)
                    self._index[tok] = idx
                out[row, idx] = 1.0
        return out


class HttpEmbedder:
    """Remote embedding service: POST {tokens: [...]} -> {vectors: [[...]]}."""

    def __init__(self, endpoint: str, timeout_ms: int = 30000):
        if not endpoint or not endpoint.startswith(("http://", "https://")):
            raise ValueError(f"invalid embedding endpoint: {endpoint!r}")
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout_ms / 1000.0)

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        response = self._client.post(self.endpoint, json={"tokens": list(tokens)})
        response.raise_for_status()
        vectors = response.json()["vectors"]
        if len(vectors) != len(tokens):
            raise ValueError(
                f"embedding service returned {len(vectors)} vectors for {len(tokens)} tokens"
            )
        return np.asarray(vectors, dtype=np.float64)

    def close(self) -> None:
        self._client.close()
