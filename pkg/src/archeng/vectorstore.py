"""Exact brute-force cosine vector store with JSON-lines persistence.

Store sizes here are thousands of entries, so an in-memory list with
exhaustive similarity scan is the simplest correct choice.  Ties in
similarity are broken by insertion order.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyStore


@dataclass
class Entry:
    vector: np.ndarray
    payload: str
    metadata: dict = field(default_factory=dict)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


class VectorStore:
    def __init__(self, dimension: int):
        self.dimension = dimension
        self.entries: list[Entry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, vector: np.ndarray, payload: str, metadata: dict | None = None) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dimension,):
            raise ValueError(f"vector shape {vector.shape} != ({self.dimension},)")
        if not payload:
            raise ValueError("payload must be non-empty")
        self.entries.append(Entry(vector, payload, dict(metadata or {})))

    def scores(self, query: np.ndarray) -> list[float]:
        return [cosine(entry.vector, query) for entry in self.entries]

    def top_k(self, query: np.ndarray, k: int) -> list[tuple[float, Entry]]:
        scored = [(score, i) for i, score in enumerate(self.scores(query))]
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        return [(score, self.entries[i]) for score, i in scored[:k]]

    def band_query(self, query: np.ndarray, bands: list[tuple[float, float]],
                   per_band: int) -> list[tuple[float, Entry]]:
        """Up to per_band entries per [lo, hi) similarity band (hi=1.0 is
        inclusive), band-major, highest similarity first within each band."""
        if not self.entries:
            raise EmptyStore("vector store is empty")
        scored = [(score, i) for i, score in enumerate(self.scores(query))]
        result = []
        for lo, hi in bands:
            hits = [(s, i) for s, i in scored if lo <= s < hi or (s == hi and hi >= 1.0)]
            hits.sort(key=lambda pair: (-pair[0], pair[1]))
            result.extend((s, self.entries[i]) for s, i in hits[:per_band])
        return result

    # -- persistence ------------------------------------------------------

    def save(self, path: Path) -> None:
        lines = []
        for entry in self.entries:
            lines.append(json.dumps({
                "vector": base64.b64encode(entry.vector.tobytes()).decode(),
                "payload": entry.payload,
                "metadata": entry.metadata,
            }, sort_keys=True))
        path.write_text("\n".join([json.dumps({"dimension": self.dimension})] + lines) + "\n")

    @classmethod
    def load(cls, path: Path) -> "VectorStore":
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        store = cls(header["dimension"])
        for line in lines[1:]:
            if not line.strip():
                continue
            raw = json.loads(line)
            vector = np.frombuffer(base64.b64decode(raw["vector"]), dtype=np.float32).copy()
            store.add(vector, raw["payload"], raw["metadata"])
        return store
