"""Text embeddings and cosine similarity.

Every vector is unit-normalised when it is created, so the dot product is the
cosine similarity and one code path serves every similarity computation.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

from .errors import AuthMissing, DimensionMismatch, ProviderError, ProviderTimeout

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6

# FNV-1a, 64-bit (http://www.isthe.com/chongo/tech/comp/fnv/)
FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def unit_vector(values: Sequence[float] | np.ndarray) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64).reshape(-1)
    if vec.size == 0:
        raise ValueError("embedding vector must have at least one dimension")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding vector contains non-finite values")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot normalise a zero vector")
    return vec / norm


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


def fnv1a_64(data: bytes, h: int = FNV64_OFFSET) -> int:
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 16)
def _token_hash(token: str, seed: int) -> int:
    prefix = (seed & _MASK64).to_bytes(8, "little")
    return fnv1a_64(prefix + token.encode("utf-8"))


def hash_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic signed feature-hashing embedding.

    Each lowercased whitespace token is hashed with seeded FNV-1a 64: the low
    bits pick the bucket (``h % dim``) and the top bit picks the sign.
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    acc = np.zeros(dim, dtype=np.float64)
    for token in text.lower().split():
        h = _token_hash(token, seed)
        acc[h % dim] += -1.0 if (h >> 63) & 1 else 1.0
    if not np.any(acc):
        acc[0] = 1.0
    return acc / np.linalg.norm(acc)


@runtime_checkable
class Embedder(Protocol):
    dim: int
    identity: str

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]: ...


class HashEmbedder:
    def __init__(self, dim: int = 256, seed: int = 0) -> None:
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.identity = f"hash:dim={dim}:seed={seed}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [hash_embed(t, self.dim, self.seed) for t in texts]


class CachedEmbedder:
    """Memoises another embedder by exact text; safe to share between threads."""

    def __init__(self, inner: Embedder) -> None:
        self.inner = inner
        self.dim = inner.dim
        self.identity = inner.identity
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.misses = 0

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        with self._lock:
            missing = list(dict.fromkeys(t for t in texts if t not in self._cache))
        if missing:
            vectors = self.inner.embed_batch(missing)
            with self._lock:
                self.misses += len(missing)
                for text, vec in zip(missing, vectors):
                    self._cache.setdefault(text, vec)
        with self._lock:
            return [self._cache[t] for t in texts]


def embedder_from_identity(identity: str) -> Embedder:
    """Rebuild a local embedder from its identity string (used by trace audits)."""
    if identity.startswith("hash:"):
        parts = dict(p.split("=", 1) for p in identity.split(":")[1:])
        return HashEmbedder(int(parts["dim"]), int(parts["seed"]))
    raise ValueError(f"cannot rebuild embedder {identity!r} without its configuration")


RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


@dataclass
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 0.5

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthMissing(f"environment variable {self.api_key_env} is not set")
        return key


def post_with_retry(client: httpx.Client, url: str, payload: dict, headers: dict,
                    cfg: EndpointConfig, sleep: Callable[[float], None] = time.sleep) -> dict:
    """POST JSON, retrying transient failures with exponential backoff.

    The first attempt is followed by at most ``cfg.max_retries`` retries.
    """
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            sleep(cfg.backoff * 2 ** (attempt - 1))
        try:
            resp = client.post(url, json=payload, headers=headers, timeout=cfg.timeout)
        except httpx.TimeoutException:
            last = ProviderTimeout(f"request to {url} timed out")
            logger.warning("timeout on %s (attempt %d)", url, attempt + 1)
            continue
        except httpx.TransportError as exc:
            last = ProviderError(f"transport error on {url}: {exc}")
            logger.warning("transport error on %s (attempt %d): %s", url, attempt + 1, exc)
            continue
        if resp.status_code in RETRYABLE_STATUS:
            last = ProviderError(f"{url} returned {resp.status_code}", resp.status_code)
            logger.warning("%s returned %d (attempt %d)", url, resp.status_code, attempt + 1)
            continue
        if resp.status_code >= 400:
            raise ProviderError(f"{url} returned {resp.status_code}: {resp.text[:200]}",
                                resp.status_code)
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderError(f"{url} returned invalid JSON") from exc
    assert last is not None
    raise last


class RemoteEmbedder:
    """Client for an OpenAI-style ``/embeddings`` endpoint."""

    def __init__(self, endpoint: EndpointConfig, dim: int, batch_size: int = 64,
                 client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self.endpoint = endpoint
        self.dim = dim
        self.batch_size = batch_size
        self.identity = f"remote:{endpoint.model}@{endpoint.base_url}"
        self._key = endpoint.api_key()
        self._client = client or httpx.Client()
        self._sleep = sleep

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        for i, t in enumerate(texts):
            if not t:
                raise ProviderError(f"text {i} in embedding batch is empty")
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            out.extend(self._request(texts[start:start + self.batch_size]))
        return out

    def _request(self, batch: list[str]) -> list[np.ndarray]:
        url = self.endpoint.base_url.rstrip("/") + "/embeddings"
        body = post_with_retry(
            self._client, url, {"model": self.endpoint.model, "input": batch},
            {"Authorization": f"Bearer {self._key}"}, self.endpoint, self._sleep)
        try:
            data = sorted(body["data"], key=lambda d: d["index"])
            vectors = [unit_vector(d["embedding"]) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(batch):
            raise ProviderError(f"expected {len(batch)} embeddings, got {len(vectors)}")
        for v in vectors:
            if v.shape[0] != self.dim:
                raise DimensionMismatch(f"provider returned dim {v.shape[0]}, expected {self.dim}")
        return vectors
