"""Embedding providers for descriptor search.

Three interchangeable sources of vectors: a deterministic character-n-gram
hashing embedder (no model, runs anywhere), a sidecar file of precomputed
vectors, and an HTTP client for a real encoder service.  All vectors in one
index share a dimension; the default is 384.
"""

from __future__ import annotations

import hashlib
import re
from typing import Iterable, Protocol

import numpy as np

from geoscene.errors import DimensionMismatchError

DEFAULT_DIM = 384

_WORD_RE = re.compile(r"\w+", re.UNICODE)


class EmbeddingProvider(Protocol):
    dim: int

    def encode(self, texts: list[str]) -> np.ndarray: ...


def _hash_feature(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class HashingEmbedder:
    """Deterministic fallback embedder: hashed character n-grams per word.

    Words contribute their padded bigrams and trigrams plus a whole-word
    feature.  Each feature lands in two signed coordinates (two-probe
    hashing halves collision variance), and vectors are L2-normalized, so
    cosine similarity degrades smoothly under single-character typos.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._feature_cache: dict[str, tuple[int, float, int, float]] = {}

    def _slots(self, feature: str) -> tuple[int, float, int, float]:
        cached = self._feature_cache.get(feature)
        if cached is None:
            h = _hash_feature(feature)
            cached = (
                (h >> 1) % self.dim,
                1.0 if h & 1 else -1.0,
                (h >> 33) % self.dim,
                1.0 if (h >> 32) & 1 else -1.0,
            )
            self._feature_cache[feature] = cached
        return cached

    def _features(self, text: str) -> Iterable[str]:
        for word in _WORD_RE.findall(text.casefold()):
            padded = f"^{word}$"
            for n in (2, 3):
                for i in range(len(padded) - n + 1):
                    yield padded[i : i + n]
            yield "=" + word

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for feature in self._features(text):
                i1, s1, i2, s2 = self._slots(feature)
                out[row, i1] += s1
                out[row, i2] += s2
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


class HttpEmbeddingClient:
    """Client for a {"texts": [...]} -> {"vectors": [[...]]} encoder endpoint."""

    def __init__(self, url: str, dim: int = DEFAULT_DIM, timeout: float = 30.0, transport=None):
        import httpx

        self.url = url
        self.dim = dim
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def encode(self, texts: list[str]) -> np.ndarray:
        response = self._client.post(self.url, json={"texts": texts})
        response.raise_for_status()
        vectors = np.asarray(response.json()["vectors"], dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape != (len(texts), self.dim):
            raise DimensionMismatchError(
                f"endpoint returned shape {vectors.shape}, expected ({len(texts)}, {self.dim})"
            )
        return vectors


SIDECAR_MAGIC = "geoscene-vectors"
SIDECAR_VERSION = 1


def write_vector_sidecar(path: str, vectors: dict[str, np.ndarray], dim: int) -> None:
    """Write one vector per bundle id: a versioned header then tab-separated rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{SIDECAR_MAGIC} {SIDECAR_VERSION} {dim}\n")
        for bundle_id in sorted(vectors):
            vec = np.asarray(vectors[bundle_id], dtype=np.float64)
            if vec.shape != (dim,):
                raise DimensionMismatchError(
                    f"vector for {bundle_id!r} has shape {vec.shape}, expected ({dim},)"
                )
            fh.write(bundle_id + "\t" + " ".join(f"{x:.8g}" for x in vec) + "\n")


def load_vector_sidecar(path: str) -> tuple[int, dict[str, np.ndarray]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != SIDECAR_MAGIC:
            raise DimensionMismatchError(f"{path}: not a vector sidecar file")
        if int(header[1]) != SIDECAR_VERSION:
            raise DimensionMismatchError(f"{path}: unsupported version {header[1]}")
        dim = int(header[2])
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            bundle_id, _, rest = line.rstrip("\n").partition("\t")
            values = np.array(rest.split(), dtype=np.float32)
            if values.shape != (dim,):
                raise DimensionMismatchError(
                    f"{path}:{lineno}: {values.size} floats, expected {dim}"
                )
            vectors[bundle_id] = values
    return dim, vectors


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
