"""Post-hoc structural checks over recorded traces.

Each check returns a list of human-readable violations; an empty list means
the trace is clean.
"""

from __future__ import annotations

from typing import Sequence

from .embedding import Embedder
from .forest import score_candidates
from .trace import RunTrace

SCORE_TOLERANCE = 1e-12


def _ref(trace: RunTrace) -> str:
    return f"{trace.method}:{trace.record_id or '?'}:seed{trace.seed}"


def audit_selection(trace: RunTrace, embedder: Embedder) -> list[str]:
    """Re-score every remaining candidate at every greedy step."""
    if trace.method != "goa" or trace.forest is None:
        return []
    policy = trace.config.get("selection_policy", "greedy")
    qvec = embedder.embed_batch([trace.query])[0]
    out = []
    for path in trace.forest.paths:
        taken: list[int] = []
        for step, chosen in enumerate(path.order):
            remaining = sorted(i for i in path.member_ids if i not in taken)
            where = f"{_ref(trace)} path {path.cluster_index} step {step}"
            if policy == "document_order":
                if chosen != remaining[0]:
                    out.append(f"{where}: chose {chosen}, document order expects {remaining[0]}")
            else:
                prev = path.summaries[step - 1] if step and policy == "greedy" else ""
                cands = [trace.chunk(i) for i in remaining]
                scores = dict(zip(remaining, score_candidates(qvec, prev, cands, embedder)))
                best = max(remaining, key=lambda i: (scores[i], -i))
                if best != chosen:
                    out.append(f"{where}: chose chunk {chosen} (score {scores[chosen]:.12f}) but "
                               f"chunk {best} scores {scores[best]:.12f}")
                if abs(scores[chosen] - path.selection_scores[step]) > SCORE_TOLERANCE:
                    out.append(f"{where}: recorded score {path.selection_scores[step]:.12f} != "
                               f"recomputed {scores[chosen]:.12f}")
            taken.append(chosen)
    return out


def audit_budget(trace: RunTrace) -> list[str]:
    cfg = trace.config
    t_max = cfg["t_max"]
    out = []
    for i, call in enumerate(trace.calls):
        where = f"{_ref(trace)} call {i} ({call.role})"
        if call.prompt_tokens > t_max:
            out.append(f"{where}: prompt has {call.prompt_tokens} tokens > t_max {t_max}")
        if call.response_tokens > call.max_tokens:
            out.append(f"{where}: response has {call.response_tokens} tokens > budget {call.max_tokens}")
        cap = cfg["worker_max_tokens"] if call.role == "worker" else cfg["manager_max_tokens"]
        if call.max_tokens > cap:
            out.append(f"{where}: budget {call.max_tokens} exceeds the configured {cap}")
    return out


def audit_structure(trace: RunTrace) -> list[str]:
    """Partition validity and forest completeness."""
    out = []
    ids = [c.id for c in trace.chunks]
    if trace.partition is not None:
        out += [f"{_ref(trace)} partition: {p}" for p in trace.partition.validate(ids)]
    if trace.forest is not None:
        seen: list[int] = []
        for path in trace.forest.paths:
            if sorted(path.order) != sorted(path.member_ids):
                out.append(f"{_ref(trace)} path {path.cluster_index}: order is not a permutation "
                           f"of its members")
            if not len(path.order) == len(path.summaries) == len(path.selection_scores):
                out.append(f"{_ref(trace)} path {path.cluster_index}: ragged step records")
            seen += list(path.member_ids)
        if sorted(seen) != sorted(ids):
            out.append(f"{_ref(trace)}: forest paths do not partition the chunks")
    return out


def audit_trace(trace: RunTrace, embedder: Embedder | None) -> list[str]:
    out = audit_structure(trace) + audit_budget(trace)
    if embedder is not None:
        out += audit_selection(trace, embedder)
    return out


def audit_traces(traces: Sequence[RunTrace], embedder: Embedder | None) -> list[str]:
    return [v for t in traces for v in audit_trace(t, embedder)]
