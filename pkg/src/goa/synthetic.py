"""Seeded synthetic QA corpora for offline runs.

Documents are paragraphs of topic-flavoured pseudo-words with a few planted
fact sentences. The answer-bearing sentence shares the question's vocabulary,
which is what the extractive mock backend and the hash embedder key on.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

_SYLLABLES = ("ka", "lo", "mi", "ren", "tu", "sa", "vor", "el", "din", "qua", "bri", "to",
              "nes", "pa", "gu", "rim", "zo", "fel", "an", "cor", "vi", "lu", "mon", "dra")
_ATTRIBUTES = ("capital", "founder", "river", "mascot", "currency", "anthem", "harbor",
               "festival", "governor", "summit")
_TOPICS = 5
_TOPIC_WORDS = 14


def _word(rng: random.Random, parts: int | None = None) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(parts or rng.randint(2, 3)))


def _name(rng: random.Random) -> str:
    return _word(rng, 3).capitalize()


def _filler(rng: random.Random, vocab: list[str]) -> str:
    words = [rng.choice(vocab) for _ in range(rng.randint(8, 14))]
    return " ".join(words).capitalize() + "."


def _paragraph(rng: random.Random, vocab: list[str], facts: list[str]) -> str:
    sentences = [_filler(rng, vocab) for _ in range(rng.randint(3, 6))]
    for fact in facts:
        sentences.insert(rng.randint(0, len(sentences)), fact)
    return " ".join(sentences)


def _fact(attr: str, entity: str, value: str) -> str:
    return f"The {attr} of {entity} is {value} according to the archive."


def make_record(rng: random.Random, n_paragraphs: int, kind: str = "single",
                record_id: str = "") -> dict:
    topics = [[_word(rng) for _ in range(_TOPIC_WORDS)] for _ in range(_TOPICS)]
    entity, other = _name(rng), _name(rng)
    attr = rng.choice(_ATTRIBUTES)
    answer = _name(rng)

    facts: list[str] = []
    if kind == "single":
        question = f"What is the {attr} of {entity} called?"
        facts.append(_fact(attr, entity, answer))
    else:
        question = f"What is the {attr} of the employer of {entity} called?"
        facts.append(f"{entity} works for {other} since many seasons.")
        facts.append(_fact(attr, other, answer))
    # distractors: same attribute elsewhere, other attributes of the same entity
    for _ in range(2):
        facts.append(_fact(attr, _name(rng), _name(rng)))
    facts.append(_fact(rng.choice([a for a in _ATTRIBUTES if a != attr]), entity, _name(rng)))

    slots = rng.sample(range(n_paragraphs), k=min(len(facts), n_paragraphs))
    placed: dict[int, list[str]] = {}
    for slot, fact in zip(slots, facts):
        placed.setdefault(slot, []).append(fact)
    paragraphs = []
    for i in range(n_paragraphs):
        vocab = topics[(i * _TOPICS) // n_paragraphs]
        paragraphs.append(_paragraph(rng, vocab, placed.get(i, [])))
    if kind == "multi":
        paragraphs = [f"Passage {i + 1}:\n{p}" for i, p in enumerate(paragraphs)]
    return {"_id": record_id, "dataset": f"synth_{kind}", "input": question,
            "context": "\n\n".join(paragraphs), "answers": [answer]}


def make_corpus(n_records: int, seed: int = 0, n_paragraphs: int = 24,
                kinds: tuple[str, ...] = ("single", "multi")) -> list[dict]:
    rng = random.Random(seed)
    return [make_record(rng, n_paragraphs, kinds[i % len(kinds)], f"synth-{seed}-{i:03d}")
            for i in range(n_records)]


def write_corpus(path: str | Path, records: list[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
