"""Chat backends: an OpenAI-style HTTP client and a deterministic mock."""

from __future__ import annotations

import re
import time
from typing import Callable, Protocol, runtime_checkable

import httpx

from .embedding import EndpointConfig, post_with_retry
from .errors import ProviderError, UnparseablePrompt
from .segmentation import DEFAULT_TOKENIZER, Tokenizer, truncate_head


@runtime_checkable
class ChatBackend(Protocol):
    identity: str

    def generate(self, prompt: str, max_output_tokens: int, temperature: float,
                 top_p: float, seed: int | None = None) -> str: ...


class RemoteChatBackend:
    """Single user-message requests against ``{base_url}/chat/completions``."""

    def __init__(self, endpoint: EndpointConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self.endpoint = endpoint
        self.identity = f"remote:{endpoint.model}@{endpoint.base_url}"
        self._key = endpoint.api_key()
        self._client = client or httpx.Client()
        self._sleep = sleep

    def request_body(self, prompt: str, max_output_tokens: int, temperature: float,
                     top_p: float, seed: int | None = None) -> dict:
        body = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "top_p": top_p,
            "max_tokens": max_output_tokens,
        }
        if seed is not None:
            body["seed"] = seed
        return body

    def generate(self, prompt: str, max_output_tokens: int, temperature: float,
                 top_p: float, seed: int | None = None) -> str:
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        body = post_with_retry(
            self._client, url, self.request_body(prompt, max_output_tokens, temperature, top_p, seed),
            {"Authorization": f"Bearer {self._key}"}, self.endpoint, self._sleep)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}") from exc
        return content if content is not None else ""


# -- mock ---------------------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+|\n+")
_WORD = re.compile(r"\w+")
_HEADER_LINE = re.compile(r"^\[Summary of Worker \d+ out of \d+\]$", re.M)

_WORKER_MARKERS = ("\n\n[SOURCE TEXT]: ", "\n\n[PREVIOUS SUMMARY]: ", "\n\n[QUERY]: ", "\n\nSummary:")
_MANAGER_START = "You need to generate a final summary based on the provided summary:\n\n"
_VANILLA_START = "The following are given passages.\n"
_ANSWER_SECTION = "\n\nAnswer the question based on"
_QUESTION = "\nQuestion: "


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(text) if s.strip()]


def word_set(text: str) -> set[str]:
    return set(_WORD.findall(text.lower()))


def overlap(sentence: str, query_words: set[str]) -> int:
    return len(word_set(sentence) & query_words)


def parse_prompt(prompt: str) -> tuple[str, str, str]:
    """Split a rendered prompt into ``(kind, text, query)``.

    ``kind`` is ``"worker"`` (text = source followed by previous summary) or
    ``"answer"`` (manager and vanilla prompts).
    """
    src, prev, qry, end = _WORKER_MARKERS
    if prompt.endswith(end) and src in prompt:
        i = prompt.index(src) + len(src)
        q = prompt.rindex(qry)
        p = prompt.rindex(prev, i - len(src), q)
        return "worker", prompt[i:p] + "\n" + prompt[p + len(prev):q], prompt[q + len(qry):-len(end)]
    for start in (_MANAGER_START, _VANILLA_START):
        if start in prompt and _QUESTION in prompt:
            i = prompt.index(start) + len(start)
            j = prompt.rindex(_ANSWER_SECTION)
            if j < i:
                break
            q = prompt.rindex(_QUESTION) + len(_QUESTION)
            query = prompt[q:].split("\n", 1)[0]
            return "answer", _HEADER_LINE.sub("", prompt[i:j]), query
    raise UnparseablePrompt("prompt matches none of the worker/manager/vanilla layouts")


class MockBackend:
    """Extractive stand-in for an LLM.

    Workers keep the sentences with the most query-word overlap (in source
    order) until the output budget is spent; answering prompts return the
    single best sentence inside ``<answer>`` tags. Output depends only on the
    prompt and the budget.
    """

    identity = "mock:extractive"

    def __init__(self, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> None:
        self.tokenizer = tokenizer

    def generate(self, prompt: str, max_output_tokens: int, temperature: float = 0.0,
                 top_p: float = 1.0, seed: int | None = None) -> str:
        kind, text, query = parse_prompt(prompt)
        sentences = split_sentences(text)
        qwords = word_set(query)
        scores = [overlap(s, qwords) for s in sentences]
        if kind == "answer":
            if not sentences:
                return "<answer>unanswerable</answer>"
            best = max(range(len(sentences)), key=lambda i: (scores[i], -i))
            # the tags are not separate whitespace tokens, so they cost nothing
            return f"<answer>{truncate_head(sentences[best], max_output_tokens, self.tokenizer)}</answer>"
        return self._summarize(sentences, scores, max_output_tokens)

    def _summarize(self, sentences: list[str], scores: list[int], budget: int) -> str:
        if not sentences:
            return ""
        ranked = sorted((i for i in range(len(sentences)) if scores[i] > 0),
                        key=lambda i: (-scores[i], i))
        if not ranked:
            ranked = [0]  # nothing relevant: keep the lead sentence so the summary is never empty
        chosen: list[int] = []
        used = 0
        for i in ranked:
            n = self.tokenizer.count(sentences[i])
            if used + n > budget:
                if not chosen:
                    return truncate_head(sentences[i], budget, self.tokenizer)
                break
            chosen.append(i)
            used += n
        return " ".join(sentences[i] for i in sorted(chosen))
