"""Embedding providers: a remote client and a deterministic local hasher."""

from __future__ import annotations

import hashlib
import os
import re

import httpx
import numpy as np

from .errors import ProviderError


class HashingEmbedder:
    """Deterministic feature-hashing embedder for offline runs and tests.

    Each lowercase token contributes a unit vector seeded by its sha256;
    the sum is L2-normalized.  Same text always gives the same vector and
    texts sharing tokens have positive cosine similarity.
    """

    def __init__(self, dimension: int = 256):
        self.dimension = dimension
        self.model_id = f"local-hashing-{dimension}"

    def _token_vector(self, token: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dimension)
        return vec / np.linalg.norm(vec)

    def embed(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            tokens = ["<empty>"]
        total = np.zeros(self.dimension)
        for token in tokens:
            total += self._token_vector(token)
        norm = np.linalg.norm(total)
        if norm == 0:
            total[0] = 1.0
            norm = 1.0
        return (total / norm).astype(np.float32)


class RemoteEmbedder:
    """OpenAI-compatible embeddings endpoint client."""

    def __init__(self, endpoint: str, model_id: str = "text-embedding-ada-002",
                 api_key_env: str = "ARCHENG_API_KEY", dimension: int = 1536,
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.model_id = model_id
        self.dimension = dimension
        self._headers = {}
        key = os.environ.get(api_key_env)
        if key:
            self._headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = self._client.post(self.endpoint, headers=self._headers,
                                     json={"model": self.model_id, "input": text})
            resp.raise_for_status()
            data = resp.json()["data"][0]["embedding"]
        except Exception as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        return np.asarray(data, dtype=np.float32)
