"""Worker and manager agent calls plus the token budgets that keep them inside
the context window."""

from __future__ import annotations

import hashlib
import re
from dataclasses import asdict, dataclass, field, fields

from .backends import ChatBackend
from .errors import ConfigError, PromptOverflow
from .prompts import (TASK_KINDS, WORKER_HEADER, load_template, manager_prompt,
                      vanilla_prompt, worker_prompt)
from .segmentation import DEFAULT_TOKENIZER, Chunk, Tokenizer, truncate_head

MANAGER_MAX_TOKENS = 128
TEMPERATURE = 0.1
TOP_P = 0.9
DEFAULT_K = 4
RAG_CHUNK_WORDS = 300

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.S)


def default_worker_budget(t_max: int) -> int:
    """256 tokens at a 2K window and 1024 at 8K, i.e. one eighth of the window."""
    return max(1, t_max // 8)


@dataclass(frozen=True)
class AgentRunConfig:
    t_max: int = 2048
    worker_max_tokens: int | None = None
    manager_max_tokens: int = MANAGER_MAX_TOKENS
    temperature: float = TEMPERATURE
    top_p: float = TOP_P
    k: int = DEFAULT_K
    task_kind: str = "single_doc_qa"
    clustering: str = "kmedoids"
    selection_policy: str = "greedy"
    retriever: str = "embedding"
    rag_chunk_words: int = RAG_CHUNK_WORDS
    rag_order: str = "document"
    max_parallel: int = 4
    seed: int = 0
    tokenizer: Tokenizer = field(default=DEFAULT_TOKENIZER, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.worker_max_tokens is None:
            object.__setattr__(self, "worker_max_tokens", default_worker_budget(self.t_max))
        for name in ("t_max", "worker_max_tokens", "manager_max_tokens", "k",
                     "rag_chunk_words", "max_parallel"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"task_kind must be one of {TASK_KINDS}")
        if self.clustering not in ("kmedoids", "kmeans"):
            raise ConfigError(f"unknown clustering method {self.clustering!r}")
        if self.selection_policy not in ("greedy", "document_order", "query_only"):
            raise ConfigError(f"unknown selection policy {self.selection_policy!r}")
        if self.retriever not in ("embedding", "bm25"):
            raise ConfigError(f"unknown retriever {self.retriever!r}")
        if self.rag_order not in ("document", "score"):
            raise ConfigError(f"unknown rag_order {self.rag_order!r}")
        need = self.worker_max_tokens * self.k + manager_overhead(self, "", self.k)
        if need > self.t_max:
            raise ConfigError(
                f"{self.k} worker summaries of {self.worker_max_tokens} tokens plus the manager "
                f"prompt need {need} tokens, more than t_max={self.t_max}")

    def snapshot(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "tokenizer"}

    def with_(self, **changes) -> AgentRunConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        if "t_max" in changes and "worker_max_tokens" not in changes:
            values["worker_max_tokens"] = None
        return AgentRunConfig(**values)


@dataclass(frozen=True)
class CallRecord:
    role: str          # "worker", "manager" or "model"
    path: int          # cluster index for workers, -1 otherwise
    step: int
    prompt_hash: str
    prompt_tokens: int
    max_tokens: int
    response: str
    response_tokens: int
    chunk_id: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> CallRecord:
        return cls(**{f.name: d.get(f.name) for f in fields(cls)})


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def extract_answer(raw: str) -> str:
    """Content of the first ``<answer>...</answer>`` pair, else the whole text."""
    m = _ANSWER_RE.search(raw)
    return (m.group(1) if m else raw).strip()


def invoke(backend: ChatBackend, prompt: str, max_tokens: int, cfg: AgentRunConfig,
           role: str, path: int = -1, step: int = 0, chunk_id: int | None = None) -> CallRecord:
    """Check the prompt fits, call the backend, clamp the output to ``max_tokens``."""
    tok = cfg.tokenizer
    n = tok.count(prompt)
    if n > cfg.t_max:
        raise PromptOverflow(n, cfg.t_max, f"{role} prompt")
    raw = backend.generate(prompt, max_tokens, cfg.temperature, cfg.top_p, cfg.seed)
    out = truncate_head(raw, max_tokens, tok)
    return CallRecord(role, path, step, prompt_hash(prompt), n, max_tokens, out,
                      tok.count(out), chunk_id)


def worker_call(chunk: Chunk, prev_summary: str, query: str, backend: ChatBackend,
                cfg: AgentRunConfig, max_tokens: int | None = None, path: int = 0,
                step: int = 0) -> CallRecord:
    prompt = worker_prompt(chunk.text, prev_summary, query)
    return invoke(backend, prompt, max_tokens or cfg.worker_max_tokens, cfg, "worker",
                  path, step, chunk.id)


def worker_step(chunk: Chunk, prev_summary: str, query: str, backend: ChatBackend,
                cfg: AgentRunConfig) -> str:
    return worker_call(chunk, prev_summary, query, backend, cfg).response


def manager_call(summaries: list[str], query: str, backend: ChatBackend,
                 cfg: AgentRunConfig) -> CallRecord:
    prompt = manager_prompt(summaries, query, cfg.task_kind)
    return invoke(backend, prompt, cfg.manager_max_tokens, cfg, "manager")


def manager_answer(summaries: list[str], query: str, backend: ChatBackend,
                   cfg: AgentRunConfig) -> tuple[str, str]:
    raw = manager_call(summaries, query, backend, cfg).response
    return raw, extract_answer(raw)


# -- budgets ------------------------------------------------------------------

def worker_overhead(cfg: AgentRunConfig, query: str) -> int:
    return cfg.tokenizer.count(worker_prompt("", "", query))


def manager_overhead(cfg: AgentRunConfig, query: str, n_summaries: int) -> int:
    """Manager prompt tokens excluding summary bodies (template, query, headers)."""
    tok = cfg.tokenizer
    suffix = "single" if cfg.task_kind == "single_doc_qa" else "multi"
    base = tok.count(load_template(f"manager_{suffix}").render(summary="", query=query))
    if n_summaries <= 1:
        return base
    header = tok.count(WORKER_HEADER.format(i=n_summaries, k=n_summaries))
    return base + n_summaries * header


def vanilla_overhead(cfg: AgentRunConfig, query: str) -> int:
    return cfg.tokenizer.count(vanilla_prompt("", query, cfg.task_kind))


def chunk_budget(cfg: AgentRunConfig, query: str) -> int:
    """Tokens left for the source chunk in a worker prompt.

    The window must also hold the template, the previous summary and the
    worker's own output.
    """
    budget = cfg.t_max - worker_overhead(cfg, query) - 2 * cfg.worker_max_tokens
    if budget < 1:
        raise ConfigError(f"t_max={cfg.t_max} leaves no room for a chunk")
    return budget


def summary_budget(cfg: AgentRunConfig, query: str, n_summaries: int) -> int:
    """Per-worker output cap so that ``n_summaries`` final summaries fit the manager."""
    room = cfg.t_max - manager_overhead(cfg, query, n_summaries)
    budget = min(cfg.worker_max_tokens, room // max(1, n_summaries))
    if budget < 1:
        raise PromptOverflow(manager_overhead(cfg, query, n_summaries) + n_summaries,
                             cfg.t_max, "manager prompt")
    return budget
