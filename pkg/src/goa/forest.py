"""Linear-forest state and the greedy next-chunk rule.

Each cluster of chunks becomes one path. At every step the next chunk is the
one whose concatenation with the running summary is closest to the query in
embedding space; ties go to the lowest chunk id.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .clustering import Partition
from .embedding import Embedder, cosine_sim
from .errors import DuplicateSelection, ForeignChunk
from .segmentation import Chunk

SelectionPolicy = Literal["greedy", "document_order", "query_only"]
POLICIES = ("greedy", "document_order", "query_only")
CONCAT_SEPARATOR = "\n"


def candidate_text(prev_summary: str, chunk_text: str) -> str:
    return f"{prev_summary}{CONCAT_SEPARATOR}{chunk_text}" if prev_summary else chunk_text


def score_candidates(query_vec: np.ndarray, prev_summary: str, remaining: Sequence[Chunk],
                     embedder: Embedder) -> list[float]:
    texts = [candidate_text(prev_summary, c.text) for c in remaining]
    return [cosine_sim(query_vec, v) for v in embedder.embed_batch(texts)]


def select_next(query_vec: np.ndarray, prev_summary: str, remaining: Sequence[Chunk],
                embedder: Embedder, policy: SelectionPolicy = "greedy") -> tuple[int, float]:
    """Pick the next chunk for a path and return ``(chunk_id, score)``.

    ``greedy`` is the contextual rule. ``query_only`` ignores the running
    summary (the no-context ablation) and ``document_order`` takes the lowest
    id, which turns a single path into a plain chain.
    """
    if not remaining:
        raise ValueError("no remaining candidates")
    ordered = sorted(remaining, key=lambda c: c.id)
    if policy == "document_order":
        first = ordered[0]
        return first.id, score_candidates(query_vec, prev_summary, [first], embedder)[0]
    context = "" if policy == "query_only" else prev_summary
    scores = score_candidates(query_vec, context, ordered, embedder)
    best = max(range(len(ordered)), key=lambda i: (scores[i], -ordered[i].id))
    return ordered[best].id, scores[best]


@dataclass(frozen=True)
class PathState:
    cluster_index: int
    member_ids: frozenset[int]
    order: tuple[int, ...] = ()
    summaries: tuple[str, ...] = ()
    selection_scores: tuple[float, ...] = ()

    @property
    def complete(self) -> bool:
        return len(self.order) == len(self.member_ids)

    @property
    def last_summary(self) -> str:
        return self.summaries[-1] if self.summaries else ""

    def remaining(self) -> list[int]:
        taken = set(self.order)
        return sorted(i for i in self.member_ids if i not in taken)

    def to_dict(self) -> dict:
        return {"cluster_index": self.cluster_index, "member_ids": sorted(self.member_ids),
                "order": list(self.order), "summaries": list(self.summaries),
                "selection_scores": list(self.selection_scores)}

    @classmethod
    def from_dict(cls, d: dict) -> PathState:
        return cls(int(d["cluster_index"]), frozenset(d["member_ids"]), tuple(d["order"]),
                   tuple(d["summaries"]), tuple(d["selection_scores"]))


def advance_path(path: PathState, chunk_id: int, summary: str, score: float) -> PathState:
    if chunk_id not in path.member_ids:
        raise ForeignChunk(f"chunk {chunk_id} is not in cluster {path.cluster_index}")
    if chunk_id in path.order:
        raise DuplicateSelection(f"chunk {chunk_id} already selected in cluster {path.cluster_index}")
    return replace(path, order=path.order + (chunk_id,), summaries=path.summaries + (summary,),
                   selection_scores=path.selection_scores + (float(score),))


@dataclass(frozen=True)
class LinearForest:
    paths: tuple[PathState, ...] = field(default=())

    def chunk_ids(self) -> list[int]:
        return sorted(i for p in self.paths for i in p.member_ids)

    def final_summaries(self) -> list[str]:
        return [p.last_summary for p in self.paths]

    def to_dict(self) -> dict:
        return {"paths": [p.to_dict() for p in self.paths]}

    @classmethod
    def from_dict(cls, d: dict) -> LinearForest:
        return cls(tuple(PathState.from_dict(p) for p in d["paths"]))


def init_forest(partition: Partition, chunks: Sequence[Chunk]) -> LinearForest:
    problems = partition.validate([c.id for c in chunks])
    if problems:
        raise ValueError("invalid partition: " + "; ".join(problems))
    return LinearForest(tuple(PathState(i, frozenset(members))
                              for i, members in enumerate(partition.clusters())))
