"""Chunk scoring for the retrieval baseline: Okapi BM25 or embedding cosine."""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Sequence

from .embedding import Embedder, cosine_sim
from .segmentation import Chunk

_TOKEN = re.compile(r"\w+")


def bm25_tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class BM25:
    def __init__(self, docs: Sequence[str], k1: float = 1.5, b: float = 0.75) -> None:
        self.k1, self.b = k1, b
        self.docs = [bm25_tokenize(d) for d in docs]
        self.n = len(self.docs)
        self.lengths = [len(d) for d in self.docs]
        self.avgdl = (sum(self.lengths) / self.n) if self.n else 0.0
        self.tf = [Counter(d) for d in self.docs]
        df = Counter(t for tf in self.tf for t in tf)
        # Lucene-style idf, never negative
        self.idf = {t: math.log(1.0 + (self.n - n + 0.5) / (n + 0.5)) for t, n in df.items()}

    def scores(self, query: str) -> list[float]:
        terms = bm25_tokenize(query)
        out = []
        for tf, dl in zip(self.tf, self.lengths):
            norm = self.k1 * (1 - self.b + self.b * dl / self.avgdl) if self.avgdl else self.k1
            s = 0.0
            for t in terms:
                f = tf.get(t)
                if f:
                    s += self.idf[t] * f * (self.k1 + 1) / (f + norm)
            out.append(s)
        return out


def score_chunks(chunks: Sequence[Chunk], query: str, retriever: str,
                 embedder: Embedder | None = None) -> list[float]:
    if retriever == "bm25":
        return BM25([c.text for c in chunks]).scores(query)
    if retriever == "embedding":
        if embedder is None:
            raise ValueError("embedding retriever needs an embedder")
        vecs = embedder.embed_batch([query] + [c.text for c in chunks])
        return [cosine_sim(vecs[0], v) for v in vecs[1:]]
    raise ValueError(f"unknown retriever {retriever!r}")


def top_k(scores: Sequence[float], kappa: int) -> list[int]:
    """Indices of the ``kappa`` best scores, best first, ties to the lower index."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:max(0, kappa)]
