"""Run traces and their line-delimited JSON form.

A trace file holds one JSON object per event: the run header, each chunk, the
partition, each path, the retrieval decision, each backend call and the
result. Wall-clock time is kept on the object but never written to the file,
so trace files from identical runs are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .agents import CallRecord
from .clustering import Partition
from .forest import LinearForest, PathState
from .segmentation import Chunk

METHODS = ("goa", "vanilla", "rag", "coa", "parallel_agents")


@dataclass
class RunTrace:
    method: str
    query: str
    config: dict
    seed: int = 0
    record_id: str = ""
    embedder: str | None = None
    backend: str | None = None
    chunks: list[Chunk] = field(default_factory=list)
    partition: Partition | None = None
    forest: LinearForest | None = None
    retrieval: dict | None = None
    calls: list[CallRecord] = field(default_factory=list)
    final_summaries: list[str] = field(default_factory=list)
    compressed: str = ""
    answer: str = ""
    error: str | None = None
    wall_time: float = 0.0

    def prompt_hashes(self) -> list[str]:
        return [c.prompt_hash for c in self.calls]

    def chunk(self, chunk_id: int) -> Chunk:
        return next(c for c in self.chunks if c.id == chunk_id)

    def events(self) -> list[dict]:
        out: list[dict] = [{
            "event": "run", "method": self.method, "record_id": self.record_id,
            "query": self.query, "seed": self.seed, "embedder": self.embedder,
            "backend": self.backend, "config": self.config,
        }]
        out += [{"event": "chunk", **c.to_dict()} for c in self.chunks]
        if self.partition is not None:
            out.append({"event": "partition", **self.partition.to_dict()})
        if self.forest is not None:
            out += [{"event": "path", **p.to_dict()} for p in self.forest.paths]
        if self.retrieval is not None:
            out.append({"event": "retrieval", **self.retrieval})
        out += [{"event": "call", **c.to_dict()} for c in self.calls]
        out.append({"event": "result", "final_summaries": self.final_summaries,
                    "compressed": self.compressed, "answer": self.answer, "error": self.error})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, ensure_ascii=False) + "\n"
                       for e in self.events())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_events(cls, events: list[dict]) -> RunTrace:
        if not events or events[0].get("event") != "run":
            raise ValueError("trace must start with a run event")
        head = events[0]
        trace = cls(method=head["method"], query=head["query"], config=head["config"],
                    seed=head["seed"], record_id=head["record_id"],
                    embedder=head.get("embedder"), backend=head.get("backend"))
        paths = []
        for e in events[1:]:
            kind = e.pop("event")
            if kind == "chunk":
                trace.chunks.append(Chunk.from_dict(e))
            elif kind == "partition":
                trace.partition = Partition.from_dict(e)
            elif kind == "path":
                paths.append(PathState.from_dict(e))
            elif kind == "retrieval":
                trace.retrieval = e
            elif kind == "call":
                trace.calls.append(CallRecord.from_dict(e))
            elif kind == "result":
                trace.final_summaries = e["final_summaries"]
                trace.compressed = e["compressed"]
                trace.answer = e["answer"]
                trace.error = e.get("error")
            else:
                raise ValueError(f"unknown trace event {kind!r}")
        if paths:
            trace.forest = LinearForest(tuple(paths))
        return trace

    @classmethod
    def from_jsonl(cls, text: str) -> RunTrace:
        return cls.from_events([json.loads(line) for line in text.splitlines() if line.strip()])

    @classmethod
    def read(cls, path: str | Path) -> RunTrace:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))
