"""QA scoring, dataset ingestion, seed aggregation and query-similarity stats."""

from __future__ import annotations

import json
import logging
import math
import re
import string
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .agents import AgentRunConfig
from .embedding import Embedder, cosine_sim
from .errors import MissingField, ParseError, PipelineError
from .trace import RunTrace

logger = logging.getLogger(__name__)

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def _f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def qa_f1(prediction: str, golds: Sequence[str]) -> float:
    """Token-level F1 after SQuAD-style normalisation, maximised over golds."""
    if not golds:
        raise ValueError("at least one gold answer is required")
    pred = normalize_answer(prediction).split()
    return max(_f1(pred, normalize_answer(g).split()) for g in golds)


@dataclass(frozen=True)
class QARecord:
    context: str
    input: str
    answers: tuple[str, ...]
    dataset: str = "default"
    record_id: str = ""


def load_dataset(path: str | Path, lenient: bool = False,
                 default_dataset: str | None = None) -> list[QARecord]:
    """Read LongBench-shaped JSONL (``context``, ``input``, ``answers``)."""
    path = Path(path)
    name = default_dataset or path.stem
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
                if not isinstance(row, dict):
                    raise ParseError("record is not a JSON object", lineno)
                for key in ("context", "input", "answers"):
                    if key not in row:
                        raise MissingField(f"missing field {key!r}", lineno)
                answers = row["answers"]
                if isinstance(answers, str):
                    answers = [answers]
                if not answers or not str(row["context"]).strip():
                    raise ParseError("empty context or answers", lineno)
                records.append(QARecord(
                    context=row["context"], input=row["input"],
                    answers=tuple(str(a) for a in answers),
                    dataset=row.get("dataset") or name,
                    record_id=str(row.get("_id") or row.get("record_id") or f"{name}-{lineno}"),
                ))
            except ParseError as exc:
                if not lenient:
                    raise
                logger.warning("%s: skipping %s", path, exc)
    if not records:
        logger.warning("%s contains no records", path)
    return records


@dataclass(frozen=True)
class EvalResult:
    record_id: str
    dataset: str
    method: str
    seed: int
    prediction: str
    answers: tuple[str, ...]
    f1: float
    trace_ref: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["answers"] = list(self.answers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvalResult:
        return cls(d["record_id"], d["dataset"], d["method"], int(d["seed"]), d["prediction"],
                   tuple(d["answers"]), float(d["f1"]), d.get("trace_ref"), d.get("error"))


RecordRunner = Callable[[QARecord, AgentRunConfig], RunTrace]


def trace_filename(record_id: str, seed: int) -> str:
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", record_id)
    return f"{safe}__seed{seed}.jsonl"


def evaluate(records: Sequence[QARecord], runner: RecordRunner, cfg: AgentRunConfig,
             seeds: Sequence[int], method: str, trace_dir: Path | None = None,
             max_parallel: int = 1) -> tuple[list[EvalResult], dict]:
    """Run every record under every seed. Failures score 0 and carry an error marker."""
    if not seeds:
        raise ValueError("at least one seed is required")
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)

    def one(job: tuple[QARecord, int]) -> EvalResult:
        record, seed = job
        trace: RunTrace | None = None
        error = None
        try:
            trace = runner(record, cfg.with_(seed=seed))
        except PipelineError as exc:
            cause = exc.__cause__ or exc
            trace, error = exc.trace, f"{type(cause).__name__}: {cause}"
        except Exception as exc:  # a record never takes the whole evaluation down
            error = f"{type(exc).__name__}: {exc}"
        if error:
            logger.warning("record %s seed %d failed: %s", record.record_id, seed, error)
        ref = None
        if trace_dir is not None and trace is not None:
            trace.record_id = record.record_id
            name = trace_filename(record.record_id, seed)
            trace.write(trace_dir / name)
            ref = f"{trace_dir.name}/{name}"
        prediction = trace.answer if (trace is not None and error is None) else ""
        f1 = 0.0 if error else qa_f1(prediction, record.answers)
        return EvalResult(record.record_id, record.dataset, method, seed, prediction,
                          record.answers, f1, ref, error)

    jobs = [(r, s) for r in records for s in seeds]
    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        results = list(pool.map(one, jobs))
    results.sort(key=lambda r: (r.dataset, r.record_id, r.seed))
    return results, summarize(results)


def summarize(results: Iterable[EvalResult]) -> dict:
    """Per-dataset mean F1 with its standard error across seeds, the mean of the
    dataset means (``average``) and the mean over all results (``pooled_average``)."""
    results = sorted(results, key=lambda r: (r.dataset, r.record_id, r.seed))
    by_ds: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in results:
        by_ds[r.dataset][r.seed].append(r.f1)
    datasets = {}
    for ds in sorted(by_ds):
        per_seed = {seed: float(np.mean(v)) for seed, v in sorted(by_ds[ds].items())}
        means = list(per_seed.values())
        stderr = float(np.std(means, ddof=1) / math.sqrt(len(means))) if len(means) > 1 else 0.0
        n_records = len({r.record_id for r in results if r.dataset == ds})
        datasets[ds] = {"mean_f1": float(np.mean(means)), "stderr": stderr,
                        "per_seed": {str(s): m for s, m in per_seed.items()},
                        "n_records": n_records}
    return {
        "datasets": datasets,
        "average": float(np.mean([d["mean_f1"] for d in datasets.values()])) if datasets else 0.0,
        "pooled_average": float(np.mean([r.f1 for r in results])) if results else 0.0,
        "n_results": len(results),
        "n_errors": sum(1 for r in results if r.error),
    }


# -- query-similarity analysis --------------------------------------------------

def box_stats(values: Sequence[float]) -> dict:
    """Box-plot statistics; quartiles use Hazen plotting positions ((i - 0.5) / n)."""
    if not values:
        raise ValueError("no values")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    q1, median, q3 = (float(q) for q in np.quantile(arr, [0.25, 0.5, 0.75], method="hazen"))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    return {
        "n": int(arr.size), "mean": float(arr.mean()), "median": median,
        "q1": q1, "q3": q3, "iqr": iqr,
        "lower_fence": lo_fence, "upper_fence": hi_fence,
        "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
        "outliers": [float(v) for v in arr if v < lo_fence or v > hi_fence],
    }


def query_similarity(trace: RunTrace, embedder: Embedder) -> float:
    q, z = embedder.embed_batch([trace.query, trace.compressed or " "])
    return cosine_sim(q, z)


def similarity_analysis(traces: Sequence[RunTrace], embedder: Embedder) -> tuple[dict, list[dict]]:
    """Per-method box statistics of query/compressed-input cosine similarity.

    Returns the stats and the per-trace rows they were computed from.
    """
    rows = [{"method": t.method, "record_id": t.record_id, "seed": t.seed,
             "similarity": query_similarity(t, embedder)} for t in traces]
    by_method: dict[str, list[float]] = defaultdict(list)
    for row in rows:
        by_method[row["method"]].append(row["similarity"])
    return {m: box_stats(v) for m, v in sorted(by_method.items())}, rows
