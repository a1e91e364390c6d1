"""Fixture builders shared by the pipeline and acceptance tests."""

from __future__ import annotations

import random

from goa.segmentation import Chunk

VOCAB = [f"v{i}" for i in range(60)]


def sentence(rng: random.Random, n: int = 10, extra: tuple[str, ...] = ()) -> str:
    words = [rng.choice(VOCAB) for _ in range(n)] + list(extra)
    rng.shuffle(words)
    return " ".join(words).capitalize() + "."


def paragraph(rng: random.Random, n_words: int, extra: tuple[str, ...] = ()) -> str:
    """Roughly ``n_words`` words as ten-word sentences; ``extra`` lands in the first one."""
    sentences, used = [], 0
    while used < n_words:
        n = min(10, n_words - used)
        sentences.append(sentence(rng, n, extra if not sentences else ()))
        used += n + (len(extra) if len(sentences) == 1 else 0)
    return " ".join(sentences)


def document(rng: random.Random, n_paragraphs: int, n_words: int,
             query_words: tuple[str, ...] = ("alpha", "omega")) -> str:
    paras = []
    for i in range(n_paragraphs):
        extra = query_words[: rng.randint(0, len(query_words))] if i % 2 else ()
        paras.append(paragraph(rng, n_words, extra))
    return "\n\n".join(paras)


def chunks_from(texts: list[str]) -> list[Chunk]:
    return [Chunk(i, t, len(t.split()), (0, len(t))) for i, t in enumerate(texts)]
