"""Acceptance checks, one group per criterion.

The terminal summary prints a PASS/FAIL line for every criterion (see
conftest.py). All checks run offline on the mock backend and hash embedder
except criterion 10, which needs live endpoints.
"""

from __future__ import annotations

import filecmp
import json
import math
import os
import random
import shutil
import time
from pathlib import Path

import numpy as np
import pytest
from helpers import document

from goa.agents import AgentRunConfig, vanilla_overhead
from goa.audit import audit_trace
from goa.backends import MockBackend
from goa.cli import main
from goa.clustering import cluster, partition_cost
from goa.embedding import HashEmbedder, hash_embed
from goa.evaluation import normalize_answer, qa_f1
from goa.pipelines import run_coa, run_goa, run_method, run_rag
from goa.prompts import TEMPLATE_NAMES, load_template
from goa.retrieval import BM25
from goa.synthetic import make_corpus, write_corpus
from goa.trace import RunTrace

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "golden"
EXAMPLE = ROOT / "configs" / "mock_goa.yaml"

C1 = "greedy selection is the argmax under exhaustive re-scoring"
C2 = "GoA with k=1 in document order reproduces the CoA call sequence"
C3 = "RAG keeps exactly the closed-form number of top-scoring chunks"
C4 = "token F1 fixtures and properties"
C5 = "prompt templates are byte-exact"
C6 = "every prompt fits the window and every output its budget"
C7 = "repeated runs are byte-identical"
C8 = "clustering validity, monotone cost and near-optimal k-medoids"
C9 = "similarity statistics and first-step dominance from the analyze command"
C10 = "live endpoint smoke run"


def q_vec(text: str) -> np.ndarray:
    return hash_embed(text, 256, 0)


def oracle_scores(query: str, prev: str, texts: list[str]) -> list[float]:
    """Independent re-scoring: cosine of the query with summary-plus-candidate."""
    q = q_vec(query)
    return [float(q @ q_vec(f"{prev}\n{t}" if prev else t)) for t in texts]


# -- 1 ---------------------------------------------------------------------------

@pytest.mark.criterion(1, C1)
def test_greedy_selection_matches_exhaustive_oracle():
    started = time.perf_counter()
    rng = random.Random(101)
    embedder, backend = HashEmbedder(256, 0), MockBackend()
    steps = 0
    for i in range(50):
        query = f"what is {rng.choice(['alpha', 'beta'])} {rng.choice(['omega', 'delta'])}"
        doc = document(rng, rng.randint(1, 8), rng.randint(120, 300),
                       tuple(query.split()[2:]))
        cfg = AgentRunConfig(t_max=512, k=rng.randint(1, 3), seed=i)
        trace = run_goa(doc, query, cfg, embedder, backend)
        assert len(trace.chunks) <= 8
        for path in trace.forest.paths:
            taken: list[int] = []
            for step, chosen in enumerate(path.order):
                remaining = sorted(set(path.member_ids) - set(taken))
                prev = path.summaries[step - 1] if step else ""
                scores = oracle_scores(query, prev, [trace.chunk(c).text for c in remaining])
                best = max(scores)
                assert scores[remaining.index(chosen)] == best
                assert chosen == remaining[scores.index(best)]  # ties go to the lower id
                assert path.selection_scores[step] == best
                taken.append(chosen)
                steps += 1
    assert steps > 50
    assert time.perf_counter() - started < 30.0


# -- 2 ---------------------------------------------------------------------------

@pytest.mark.criterion(2, C2)
def test_goa_single_path_reduces_to_coa():
    rng = random.Random(202)
    embedder, backend = HashEmbedder(256, 0), MockBackend()
    for i in range(20):
        query = f"which {rng.choice(['alpha', 'omega'])} is named here"
        doc = document(rng, rng.randint(1, 10), rng.randint(80, 320))
        cfg = AgentRunConfig(t_max=rng.choice([512, 1024]), seed=i)
        coa = run_coa(doc, query, cfg, backend)
        goa = run_goa(doc, query, cfg.with_(k=1, selection_policy="document_order"), embedder, backend)
        assert goa.prompt_hashes() == coa.prompt_hashes()
        assert [c.response for c in goa.calls] == [c.response for c in coa.calls]


# -- 3 ---------------------------------------------------------------------------

@pytest.mark.criterion(3, C3)
def test_rag_capacity_and_selection():
    rng = random.Random(303)
    embedder, backend = HashEmbedder(256, 0), MockBackend()
    for i in range(100):
        t_max = rng.randint(512, 8192)
        chunk_words = rng.randint(20, 400)
        retriever = rng.choice(["embedding", "bm25"])
        query = "where is the alpha omega archive"
        doc = document(rng, rng.randint(2, 30), rng.randint(40, 200))
        cfg = AgentRunConfig(t_max=t_max, rag_chunk_words=chunk_words, retriever=retriever, seed=i)
        trace = run_rag(doc, query, cfg, backend, embedder)
        r = trace.retrieval

        available = t_max - vanilla_overhead(cfg, query)
        kappa = max(a for a in range(available + 1) if a * chunk_words <= available)
        assert r["kappa"] == kappa
        assert len(r["selected"]) == min(kappa, len(trace.chunks))

        texts = [c.text for c in trace.chunks]
        if retriever == "embedding":
            scores = [float(q_vec(query) @ q_vec(t)) for t in texts]
        else:
            scores = BM25(texts).scores(query)
        assert r["scores"] == pytest.approx(scores, abs=1e-12)
        ranked = sorted(range(len(scores)), key=lambda j: (-scores[j], j))[:kappa]
        assert r["selected"] == ranked
        assert trace.calls[0].prompt_tokens <= t_max


# -- 4 ---------------------------------------------------------------------------

WORKED = [
    ("Paris", ["Paris"], 1.0),
    ("the Eiffel Tower", ["Eiffel Tower"], 1.0),
    pytest.param("a b c", ["a b d"], 2 / 3, marks=pytest.mark.xfail(
        strict=True, reason="'a' is an article under the required normalization, so the "
                            "score is F1('b c', 'b d') = 0.5, not 2/3")),
]

# hand-computed: P = overlap / |pred|, R = overlap / |gold| after normalization
FIXTURES = [
    ("Paris, France", ["paris"], 2 * (1 / 2) * 1 / (1 / 2 + 1)),
    ("new york city", ["New York"], 0.8),
    ("New York", ["new york city"], 0.8),
    ("THE answer!", ["answer"], 1.0),
    ("", ["anything"], 0.0),
    ("the a an", ["the"], 0.0),
    ("cat", ["dog"], 0.0),
    ("cat dog", ["dog cat"], 1.0),
    ("cat cat dog", ["cat dog dog"], 2 / 3),
    ("one two three four", ["one two"], 2 / 3),
    ("one", ["one two three four"], 0.4),
    ("x y z", ["q", "x y"], 0.8),
    ("x y z", ["x y z w", "q"], 2 * 1 * 0.75 / 1.75),
    ("1,000", ["1000"], 1.0),
    ("don't stop", ["dont stop"], 1.0),
    ("Barack Obama", ["Obama"], 2 / 3),
    ("yes", ["yes", "no"], 1.0),
    ("no", ["yes"], 0.0),
    ("red red red", ["red"], 0.5),
    ("an apple a day", ["apple"], 2 / 3),
    ("  spaced   out  ", ["spaced out"], 1.0),
    ("a.b", ["ab"], 1.0),
]


@pytest.mark.criterion(4, C4)
@pytest.mark.parametrize("pred,golds,expected", WORKED)
def test_f1_worked_examples(pred, golds, expected):
    assert abs(qa_f1(pred, golds) - expected) <= 1e-9


@pytest.mark.criterion(4, C4)
def test_f1_hand_computed_fixtures():
    assert len(FIXTURES) + len(WORKED) == 25
    for pred, golds, expected in FIXTURES:
        assert abs(qa_f1(pred, golds) - expected) <= 1e-9, (pred, golds)


@pytest.mark.criterion(4, C4)
def test_f1_properties():
    rng = random.Random(404)
    vocab = ["a", "an", "the", "cat", "dog", "Red", "red,", "blue", "x", "y", "7", "!", "z."]

    def text() -> str:
        return " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 6)))

    for _ in range(1000):
        a, b, c = text(), text(), text()
        assert qa_f1(a, [b]) == qa_f1(b, [a])
        assert qa_f1(a, [b, c]) >= qa_f1(a, [b])
        assert 0.0 <= qa_f1(a, [b]) <= 1.0
        norm = set(normalize_answer(a).split())
        if norm:
            assert qa_f1(a, [a]) == 1.0
        if not norm & set(normalize_answer(b).split()):
            assert qa_f1(a, [b]) == 0.0


# -- 5 ---------------------------------------------------------------------------

@pytest.mark.criterion(5, C5)
@pytest.mark.parametrize("name", TEMPLATE_NAMES)
def test_templates_render_to_golden_bytes(name):
    values = json.loads((GOLDEN / "render_values.json").read_text())[name]
    tpl = load_template(name)
    assert tpl.body.encode() == (GOLDEN / f"{name}.template.txt").read_bytes()
    assert tpl.render(**values).encode() == (GOLDEN / f"{name}.rendered.txt").read_bytes()


# -- 6 ---------------------------------------------------------------------------

class BudgetCheckingBackend:
    """Counts tokens itself and records every violation it sees."""

    identity = "mock:extractive"

    def __init__(self, t_max: int) -> None:
        self.inner = MockBackend()
        self.t_max = t_max
        self.calls: list[tuple[int, int, str]] = []

    def generate(self, prompt, max_output_tokens, temperature, top_p, seed=None):
        out = self.inner.generate(prompt, max_output_tokens, temperature, top_p, seed)
        self.calls.append((len(prompt.split()), max_output_tokens, out))
        return out


@pytest.mark.criterion(6, C6)
@pytest.mark.parametrize("t_max", [2048, 8192])
@pytest.mark.parametrize("method", ["goa", "coa", "parallel_agents", "vanilla", "rag"])
def test_budget_safety(method, t_max):
    records = [json.loads(line) for line in
               (ROOT / "src" / "goa" / "data" / "fixture.jsonl").read_text().splitlines()]
    records += make_corpus(4, seed=66, n_paragraphs=220)  # longer than the 8K window
    worker_cap = {2048: 256, 8192: 1024}[t_max]
    embedder = HashEmbedder(256, 0)
    for rec in records:
        kind = "multi_doc_qa" if rec["dataset"] == "synth_multi" else "single_doc_qa"
        cfg = AgentRunConfig(t_max=t_max, task_kind=kind)
        backend = BudgetCheckingBackend(t_max)
        trace = run_method(method, rec["context"], rec["input"], cfg, embedder, backend)
        assert backend.calls, "no model calls were made"
        for (prompt_tokens, budget, out), call in zip(backend.calls, trace.calls):
            assert prompt_tokens <= t_max
            assert len(call.response.split()) <= budget
            assert len(out.split()) <= budget
            if call.role == "worker":
                assert budget <= worker_cap
            else:
                assert budget == 128
        assert audit_trace(trace, embedder) == []


# -- 7 ---------------------------------------------------------------------------

@pytest.mark.criterion(7, C7)
def test_repeated_runs_are_byte_identical(tmp_path):
    out = tmp_path / "run"
    first = tmp_path / "first"
    assert main(["run", str(EXAMPLE), "--output-dir", str(out)]) == 0
    shutil.move(out, first)
    assert main(["run", str(EXAMPLE), "--output-dir", str(out)]) == 0

    names = ["config.yaml", "results.jsonl", "summary.json"]
    traces = sorted(p.name for p in (first / "traces").iterdir())
    assert len(traces) == 15
    assert traces == sorted(p.name for p in (out / "traces").iterdir())
    for name in names + [f"traces/{t}" for t in traces]:
        assert filecmp.cmp(first / name, out / name, shallow=False), name


# -- 8 ---------------------------------------------------------------------------

def _instances(rng: np.random.Generator, count: int, max_n: int):
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        dim = int(rng.integers(2, 9))
        x = rng.normal(size=(n, dim))
        if n > 2 and rng.random() < 0.2:
            x[1] = x[0]  # duplicate points
        yield [v / np.linalg.norm(v) for v in x], int(rng.integers(1, 5))


@pytest.mark.criterion(8, C8)
def test_partition_validity_and_monotone_cost():
    rng = np.random.default_rng(808)
    for vecs, k in _instances(rng, 200, 30):
        for method in ("kmedoids", "kmeans"):
            ids = [100 + i for i in range(len(vecs))]
            p = cluster(vecs, k, method, seed=int(rng.integers(1000)), ids=ids)
            assert p.k == min(k, len(vecs))
            assert sorted(p.assignments) == ids
            sizes = [len(c) for c in p.clusters()]
            assert len(sizes) == p.k and min(sizes) >= 1 and sum(sizes) == len(vecs)
            h = p.history
            assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))


@pytest.mark.criterion(8, C8)
def test_kmedoids_within_ten_percent_of_optimum():
    import itertools

    rng = np.random.default_rng(809)
    checked = 0
    for vecs, k in _instances(rng, 400, 8):
        k = min(k, 3, len(vecs))
        x = np.stack(vecs)
        dist = 1.0 - x @ x.T
        opt = min(float(dist[:, list(m)].min(axis=1).sum())
                  for m in itertools.combinations(range(len(vecs)), k))
        got = partition_cost(vecs, cluster(vecs, k, "kmedoids", seed=checked))
        assert got <= 1.1 * opt + 1e-9, (len(vecs), k, got, opt)
        checked += 1
    assert checked == 400


# -- 9 ---------------------------------------------------------------------------

def _hazen(sorted_vals: list[float], p: float) -> float:
    n = len(sorted_vals)
    h = n * p + 0.5  # 1-based position
    if h <= 1:
        return sorted_vals[0]
    if h >= n:
        return sorted_vals[-1]
    lo = math.floor(h)
    return sorted_vals[lo - 1] + (h - lo) * (sorted_vals[lo] - sorted_vals[lo - 1])


def _hand_box(values: list[float]) -> dict:
    v = sorted(values)
    q1, med, q3 = _hazen(v, 0.25), _hazen(v, 0.5), _hazen(v, 0.75)
    iqr = q3 - q1
    inside = [x for x in v if q1 - 1.5 * iqr <= x <= q3 + 1.5 * iqr]
    return {"mean": sum(v) / len(v), "median": med, "q1": q1, "q3": q3, "iqr": iqr,
            "whisker_low": min(inside), "whisker_high": max(inside)}


@pytest.fixture(scope="module")
def analyzed_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("fig3")
    data = root / "corpus.jsonl"
    write_corpus(data, make_corpus(30, seed=909))
    dirs = []
    for method in ("goa", "coa", "rag", "parallel_agents", "vanilla"):
        out = root / method
        assert main(["run", str(EXAMPLE), "--dataset", str(data), "--method", method,
                     "--seeds", "0", "--output-dir", str(out)]) == 0
        dirs.append(out)
    report_dir = root / "analysis"
    assert main(["analyze", *map(str, dirs), "--out", str(report_dir)]) == 0
    report = json.loads((report_dir / "analysis.json").read_text())
    return dirs, report


@pytest.mark.criterion(9, C9)
def test_similarity_box_statistics(analyzed_runs):
    dirs, report = analyzed_runs
    assert report["violations"] == []
    for d in dirs:
        sims = []
        for f in sorted((d / "traces").glob("*.jsonl")):
            t = RunTrace.read(f)
            sims.append(float(q_vec(t.query) @ q_vec(t.compressed or " ")))
        assert len(sims) == 30
        got = report["similarity"][RunTrace.read(f).method]
        for key, value in _hand_box(sims).items():
            assert abs(got[key] - value) <= 1e-9, (d.name, key)


def _goa_paths(dirs):
    for f in sorted((dirs[0] / "traces").glob("*.jsonl")):
        t = RunTrace.read(f)
        q = q_vec(t.query)
        for path in t.forest.paths:
            best_single = max(float(q @ q_vec(t.chunk(i).text)) for i in path.member_ids)
            yield path, best_single


@pytest.mark.criterion(9, C9)
def test_first_selection_dominates_single_chunks(analyzed_runs):
    dirs, report = analyzed_runs
    rows = list(_goa_paths(dirs))
    assert len(rows) >= 30
    for path, best_single in rows:
        assert path.selection_scores[0] >= best_single
    assert all(r["first_score"] >= r["best_single_chunk"] for r in report["first_step_dominance"])


@pytest.mark.criterion(9, C9)
@pytest.mark.xfail(strict=True, reason="later steps score summary-plus-chunk text, which the "
                                       "greedy rule does not bound below by single-chunk similarity")
def test_final_selection_dominates_single_chunks(analyzed_runs):
    dirs, _ = analyzed_runs
    for path, best_single in _goa_paths(dirs):
        assert path.selection_scores[-1] >= best_single


# -- 10 --------------------------------------------------------------------------

LIVE_VARS = ("GOA_LIVE_LLM_ENDPOINT", "GOA_LIVE_LLM_MODEL", "GOA_LIVE_EMBED_ENDPOINT",
             "GOA_LIVE_EMBED_MODEL", "GOA_LIVE_EMBED_DIM", "LLM_API_KEY", "EMBED_API_KEY")


@pytest.mark.live
@pytest.mark.criterion(10, C10)
@pytest.mark.skipif(not all(os.environ.get(v) for v in LIVE_VARS),
                    reason="live endpoints not configured")
def test_live_smoke(tmp_path):
    data = tmp_path / "three.jsonl"
    write_corpus(data, make_corpus(3, seed=1010))
    out = tmp_path / "live"
    env = os.environ
    assert main(["run", str(EXAMPLE), "--dataset", str(data), "--seeds", "0",
                 "--output-dir", str(out), "--t-max", "2048",
                 "--set", "backend.provider=remote",
                 "--set", f"backend.endpoint={env['GOA_LIVE_LLM_ENDPOINT']}",
                 "--set", f"backend.model={env['GOA_LIVE_LLM_MODEL']}",
                 "--set", "embedder.provider=remote",
                 "--set", f"embedder.endpoint={env['GOA_LIVE_EMBED_ENDPOINT']}",
                 "--set", f"embedder.model={env['GOA_LIVE_EMBED_MODEL']}",
                 "--set", f"embedder.dim={env['GOA_LIVE_EMBED_DIM']}"]) == 0
    results = [json.loads(line) for line in (out / "results.jsonl").read_text().splitlines()]
    assert len(results) == 3 and not any(r["error"] for r in results)
    assert main(["analyze", str(out)]) == 0
