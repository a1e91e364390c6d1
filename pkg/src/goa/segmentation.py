"""Token-budgeted chunking and middle truncation.

Chunks are built the way Chain-of-Agents builds them: paragraphs are appended
to the current chunk until the next one would overflow the budget. A paragraph
that is larger than the whole budget is hard-split at token boundaries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .errors import EmptyDocument

PARAGRAPH_SEPARATOR = "\n\n"

_BLANK_RUN = re.compile(r"\n[ \t\r\f\v]*\n(?:[ \t\r\f\v]*\n)*")
_NON_SPACE = re.compile(r"\S+")


@runtime_checkable
class Tokenizer(Protocol):
    name: str

    def spans(self, text: str) -> list[tuple[int, int]]:
        """Character offsets of every token in ``text``."""
        ...

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """One token per whitespace-delimited word."""

    name = "whitespace"

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in _NON_SPACE.finditer(text)]

    def count(self, text: str) -> int:
        return len(text.split())

    def __repr__(self) -> str:
        return "WhitespaceTokenizer()"


DEFAULT_TOKENIZER = WhitespaceTokenizer()


@dataclass(frozen=True)
class Chunk:
    id: int
    text: str
    token_count: int
    char_span: tuple[int, int]

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "token_count": self.token_count,
                "char_span": list(self.char_span)}

    @classmethod
    def from_dict(cls, d: dict) -> Chunk:
        return cls(int(d["id"]), d["text"], int(d["token_count"]), tuple(d["char_span"]))


def _paragraph_spans(document: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    bounds = [(m.start(), m.end()) for m in _BLANK_RUN.finditer(document)]
    bounds.append((len(document), len(document)))
    for sep_start, sep_end in bounds:
        piece = document[start:sep_start]
        stripped = piece.strip()
        if stripped:
            lead = len(piece) - len(piece.lstrip())
            spans.append((start + lead, start + lead + len(stripped)))
        start = sep_end
    return spans


def split_paragraphs(document: str) -> list[str]:
    """Split on runs of blank lines; single newlines stay inside a paragraph."""
    return [document[s:e] for s, e in _paragraph_spans(document)]


def token_slice(text: str, spans: list[tuple[int, int]], start: int, stop: int) -> str:
    """Text covering tokens ``start..stop-1`` (original inner whitespace kept)."""
    if stop <= start:
        return ""
    return text[spans[start][0]:spans[stop - 1][1]]


def segment(document: str, chunk_budget: int,
            tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> list[Chunk]:
    if chunk_budget <= 0:
        raise ValueError(f"chunk_budget must be positive, got {chunk_budget}")
    paragraphs = _paragraph_spans(document)
    if not paragraphs:
        raise EmptyDocument("document has no non-whitespace content")

    groups: list[list[tuple[int, int]]] = []  # each group: paragraph (or piece) spans
    current: list[tuple[int, int]] = []
    current_tokens = 0

    for start, end in paragraphs:
        para = document[start:end]
        n = tokenizer.count(para)
        if n > chunk_budget:
            if current:
                groups.append(current)
                current, current_tokens = [], 0
            tok = tokenizer.spans(para)
            for i in range(0, len(tok), chunk_budget):
                last = min(i + chunk_budget, len(tok)) - 1
                groups.append([(start + tok[i][0], start + tok[last][1])])
            continue
        if current and current_tokens + n > chunk_budget:
            groups.append(current)
            current, current_tokens = [], 0
        current.append((start, end))
        current_tokens += n
    if current:
        groups.append(current)

    chunks = []
    for i, group in enumerate(groups):
        text = PARAGRAPH_SEPARATOR.join(document[s:e] for s, e in group)
        chunks.append(Chunk(i, text, tokenizer.count(text), (group[0][0], group[-1][1])))
    return chunks


def segment_fixed(document: str, window: int,
                  tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> list[Chunk]:
    """Consecutive windows of exactly ``window`` tokens (the last may be shorter).

    Used by the retrieval baseline, whose chunks have a fixed word length.
    """
    if window <= 0:
        raise ValueError(f"window must be positive, got {window}")
    tok = tokenizer.spans(document)
    if not tok:
        raise EmptyDocument("document has no non-whitespace content")
    chunks = []
    for i, start in enumerate(range(0, len(tok), window)):
        stop = min(start + window, len(tok))
        text = token_slice(document, tok, start, stop)
        span = (tok[start][0], tok[stop - 1][1])
        chunks.append(Chunk(i, text, tokenizer.count(text), span))
    return chunks


def truncate_middle(text: str, budget: int, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> str:
    """Keep the first ceil(budget/2) and last floor(budget/2) tokens."""
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    tok = tokenizer.spans(text)
    if len(tok) <= budget:
        return text
    head = math.ceil(budget / 2)
    tail = budget // 2
    head_text = token_slice(text, tok, 0, head)
    if tail == 0:
        return head_text
    return head_text + "\n" + token_slice(text, tok, len(tok) - tail, len(tok))


def truncate_head(text: str, budget: int, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> str:
    """Keep only the first ``budget`` tokens (used to clamp overlong model outputs)."""
    tok = tokenizer.spans(text)
    if len(tok) <= budget:
        return text
    return token_slice(text, tok, 0, budget)
