"""End-to-end methods: Graph of Agents and the four baselines.

Every runner returns a :class:`RunTrace`. A failure inside a run is re-raised
as :class:`PipelineError` carrying the partial trace.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .agents import (AgentRunConfig, CallRecord, chunk_budget, extract_answer, invoke,
                     manager_call, summary_budget, vanilla_overhead, worker_call)
from .backends import ChatBackend
from .clustering import cluster
from .embedding import CachedEmbedder, Embedder
from .errors import EmptyDocument, GoaError, PipelineError
from .forest import (CONCAT_SEPARATOR, LinearForest, PathState, advance_path, init_forest,
                     select_next)
from .prompts import vanilla_prompt
from .retrieval import score_chunks, top_k
from .segmentation import Chunk, segment, segment_fixed, truncate_middle
from .trace import RunTrace

logger = logging.getLogger(__name__)


class _PathFailed(Exception):
    def __init__(self, cause: Exception, path: PathState, calls: list[CallRecord]) -> None:
        super().__init__(str(cause))
        self.cause = cause
        self.path = path
        self.calls = calls


def _check_inputs(document: str, query: str) -> None:
    if not document.strip():
        raise EmptyDocument("document has no non-whitespace content")
    if not query.strip():
        raise ValueError("query is empty")


def _start(method: str, query: str, cfg: AgentRunConfig, record_id: str,
           embedder: Embedder | None, backend: ChatBackend) -> RunTrace:
    return RunTrace(method=method, query=query, config=cfg.snapshot(), seed=cfg.seed,
                    record_id=record_id, embedder=embedder.identity if embedder else None,
                    backend=backend.identity)


def _cached(embedder: Embedder) -> Embedder:
    return embedder if isinstance(embedder, CachedEmbedder) else CachedEmbedder(embedder)


def _sorted_calls(calls: list[CallRecord]) -> list[CallRecord]:
    return sorted(calls, key=lambda c: (c.path, c.step))


def _run_path(path: PathState, chunks: dict[int, Chunk], query_vec: np.ndarray, query: str,
              embedder: Embedder, backend: ChatBackend, cfg: AgentRunConfig,
              budget: int, policy: str,
              abort: threading.Event) -> tuple[PathState, list[CallRecord]]:
    calls: list[CallRecord] = []
    try:
        while not path.complete and not abort.is_set():
            remaining = [chunks[i] for i in path.remaining()]
            chunk_id, score = select_next(query_vec, path.last_summary, remaining, embedder, policy)
            call = worker_call(chunks[chunk_id], path.last_summary, query, backend, cfg,
                               budget, path=path.cluster_index, step=len(path.order))
            calls.append(call)
            path = advance_path(path, chunk_id, call.response, score)
    except Exception as exc:
        abort.set()  # the run is lost; stop sibling paths at their next step
        raise _PathFailed(exc, path, calls) from exc
    return path, calls


def run_goa(document: str, query: str, cfg: AgentRunConfig, embedder: Embedder,
            backend: ChatBackend, record_id: str = "") -> RunTrace:
    """Chunk, cluster, grow one greedy path per cluster, then ask the manager."""
    started = time.perf_counter()
    _check_inputs(document, query)
    trace = _start("goa", query, cfg, record_id, embedder, backend)
    embedder = _cached(embedder)
    try:
        chunks = segment(document, chunk_budget(cfg, query), cfg.tokenizer)
        trace.chunks = chunks
        vecs = embedder.embed_batch([query] + [c.text for c in chunks])
        partition = cluster(vecs[1:], cfg.k, cfg.clustering, cfg.seed, ids=[c.id for c in chunks])
        trace.partition = partition
        forest = init_forest(partition, chunks)
        budget = summary_budget(cfg, query, partition.k)
    except GoaError as exc:
        raise PipelineError(str(exc), trace) from exc

    by_id = {c.id: c for c in chunks}
    paths: dict[int, PathState] = {p.cluster_index: p for p in forest.paths}
    calls: list[CallRecord] = []
    failure: _PathFailed | None = None
    abort = threading.Event()
    workers = max(1, min(len(forest.paths), cfg.max_parallel))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_path, p, by_id, vecs[0], query, embedder, backend, cfg,
                               budget, cfg.selection_policy, abort) for p in forest.paths]
        for fut in futures:
            try:
                done, path_calls = fut.result()
            except _PathFailed as exc:
                failure = failure or exc
                done, path_calls = exc.path, exc.calls
            paths[done.cluster_index] = done
            calls.extend(path_calls)
    trace.forest = LinearForest(tuple(paths[i] for i in sorted(paths)))
    trace.calls = _sorted_calls(calls)
    if failure is not None:
        trace.error = f"{type(failure.cause).__name__}: {failure.cause}"
        raise PipelineError(f"path failed: {trace.error}", trace) from failure.cause

    trace.final_summaries = trace.forest.final_summaries()
    trace.compressed = CONCAT_SEPARATOR.join(trace.final_summaries)
    return _finish_with_manager(trace, query, backend, cfg, started)


def _finish_with_manager(trace: RunTrace, query: str, backend: ChatBackend,
                         cfg: AgentRunConfig, started: float) -> RunTrace:
    try:
        call = manager_call(trace.final_summaries, query, backend, cfg)
    except GoaError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        raise PipelineError(str(exc), trace) from exc
    trace.calls.append(call)
    trace.answer = extract_answer(call.response)
    trace.wall_time = time.perf_counter() - started
    return trace


def run_coa(document: str, query: str, cfg: AgentRunConfig, backend: ChatBackend,
            record_id: str = "") -> RunTrace:
    """One worker chain over the chunks in document order."""
    started = time.perf_counter()
    _check_inputs(document, query)
    trace = _start("coa", query, cfg, record_id, None, backend)
    summary = ""
    try:
        trace.chunks = segment(document, chunk_budget(cfg, query), cfg.tokenizer)
        budget = summary_budget(cfg, query, 1)
        for step, chunk in enumerate(trace.chunks):
            call = worker_call(chunk, summary, query, backend, cfg, budget, path=0, step=step)
            trace.calls.append(call)
            summary = call.response
    except GoaError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        raise PipelineError(str(exc), trace) from exc
    trace.final_summaries = [summary]
    trace.compressed = summary
    return _finish_with_manager(trace, query, backend, cfg, started)


def summarize_independently(chunks: Sequence[Chunk], query: str, backend: ChatBackend,
                            cfg: AgentRunConfig, budget: int) -> list[CallRecord]:
    """Summarise each chunk with an empty previous summary; results follow input order."""
    def one(pos: int) -> CallRecord:
        return worker_call(chunks[pos], "", query, backend, cfg, budget, path=pos, step=0)

    with ThreadPoolExecutor(max_workers=max(1, min(len(chunks), cfg.max_parallel))) as pool:
        return list(pool.map(one, range(len(chunks))))


def run_parallel_agents(document: str, query: str, cfg: AgentRunConfig,
                        backend: ChatBackend, record_id: str = "") -> RunTrace:
    """Context-free compression: every chunk summarised in isolation."""
    started = time.perf_counter()
    _check_inputs(document, query)
    trace = _start("parallel_agents", query, cfg, record_id, None, backend)
    try:
        trace.chunks = segment(document, chunk_budget(cfg, query), cfg.tokenizer)
        budget = summary_budget(cfg, query, len(trace.chunks))
        trace.calls = summarize_independently(trace.chunks, query, backend, cfg, budget)
    except GoaError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        raise PipelineError(str(exc), trace) from exc
    trace.final_summaries = [c.response for c in trace.calls]
    trace.compressed = CONCAT_SEPARATOR.join(trace.final_summaries)
    return _finish_with_manager(trace, query, backend, cfg, started)


def _single_call(trace: RunTrace, context: str, query: str, backend: ChatBackend,
                 cfg: AgentRunConfig, started: float) -> RunTrace:
    trace.compressed = context
    try:
        call = invoke(backend, vanilla_prompt(context, query, cfg.task_kind),
                      cfg.manager_max_tokens, cfg, "model")
    except GoaError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        raise PipelineError(str(exc), trace) from exc
    trace.calls.append(call)
    trace.answer = extract_answer(call.response)
    trace.wall_time = time.perf_counter() - started
    return trace


def run_vanilla(document: str, query: str, cfg: AgentRunConfig, backend: ChatBackend,
                record_id: str = "") -> RunTrace:
    """Single model call on the document, middle-truncated to fit."""
    started = time.perf_counter()
    _check_inputs(document, query)
    trace = _start("vanilla", query, cfg, record_id, None, backend)
    budget = cfg.t_max - vanilla_overhead(cfg, query) - cfg.manager_max_tokens
    if budget < 1:
        raise PipelineError(f"t_max={cfg.t_max} leaves no room for context", trace)
    return _single_call(trace, truncate_middle(document, budget, cfg.tokenizer), query,
                        backend, cfg, started)


def rag_capacity(available_budget: int, chunk_len: int) -> int:
    """Largest a with a * chunk_len <= available_budget."""
    return max(0, available_budget // chunk_len)


def run_rag(document: str, query: str, cfg: AgentRunConfig, backend: ChatBackend,
            embedder: Embedder | None = None, record_id: str = "") -> RunTrace:
    """Keep the top-kappa chunks by retriever score and answer in one call."""
    started = time.perf_counter()
    _check_inputs(document, query)
    trace = _start("rag", query, cfg, record_id,
                   embedder if cfg.retriever == "embedding" else None, backend)
    chunks = segment_fixed(document, cfg.rag_chunk_words, cfg.tokenizer)
    trace.chunks = chunks
    available = cfg.t_max - vanilla_overhead(cfg, query)
    kappa = rag_capacity(available, cfg.rag_chunk_words)
    try:
        scores = score_chunks(chunks, query, cfg.retriever, embedder)
    except GoaError as exc:
        raise PipelineError(str(exc), trace) from exc
    ranked = [chunks[i].id for i in top_k(scores, kappa)]
    presented = sorted(ranked) if cfg.rag_order == "document" else ranked
    trace.retrieval = {"retriever": cfg.retriever, "chunk_words": cfg.rag_chunk_words,
                       "available_budget": available, "kappa": kappa, "scores": scores,
                       "selected": ranked, "presented": presented}
    if kappa == 0:
        logger.warning("context window too small for a single %d-token chunk", cfg.rag_chunk_words)
    context = "\n\n".join(trace.chunk(i).text for i in presented)
    return _single_call(trace, context, query, backend, cfg, started)


Runner = Callable[..., RunTrace]


def run_method(method: str, document: str, query: str, cfg: AgentRunConfig,
               embedder: Embedder | None, backend: ChatBackend, record_id: str = "") -> RunTrace:
    if method == "goa":
        return run_goa(document, query, cfg, embedder, backend, record_id)
    if method == "coa":
        return run_coa(document, query, cfg, backend, record_id)
    if method == "parallel_agents":
        return run_parallel_agents(document, query, cfg, backend, record_id)
    if method == "vanilla":
        return run_vanilla(document, query, cfg, backend, record_id)
    if method == "rag":
        return run_rag(document, query, cfg, backend, embedder, record_id)
    raise ValueError(f"unknown method {method!r}")
