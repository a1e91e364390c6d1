"""Command-line entry point: ``goa run``, ``goa compare``, ``goa analyze``.

Exit codes: 0 success (possibly with per-record warnings), 1 configuration or
input error, 2 provider or credential error, 3 failed trace audit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import threading
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .audit import audit_trace
from .config import (RunConfig, build_backend, build_embedder, dataset_path, load_config,
                     parse_override, schema, snapshot)
from .embedding import Embedder, HashEmbedder, embedder_from_identity
from .errors import (AuditFailure, ConfigError, GoaError, NoOverlap, ParseError, ProviderError)
from .evaluation import EvalResult, QARecord, evaluate, load_dataset, similarity_analysis
from .pipelines import run_method
from .trace import RunTrace

logger = logging.getLogger("goa")

EXIT_OK, EXIT_CONFIG, EXIT_PROVIDER, EXIT_AUDIT = 0, 1, 2, 3
_PROVIDER_ERRORS = ("ProviderError", "ProviderTimeout", "AuthMissing")


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- run ------------------------------------------------------------------------

def _overrides(args: argparse.Namespace) -> dict:
    out = dict(parse_override(item) for item in args.set or [])
    for key in ("method", "k", "t_max", "dataset", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    if args.seeds:
        out["seeds"] = [int(s) for s in args.seeds.split(",")]
    return out


def execute_run(cfg: RunConfig) -> tuple[list[EvalResult], dict]:
    """Run a validated config and persist everything under ``cfg.output_dir``."""
    backend = build_backend(cfg)
    embedder = build_embedder(cfg)
    records = load_dataset(dataset_path(cfg), lenient=cfg.lenient)

    out = Path(cfg.output_dir)
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(snapshot(cfg), encoding="utf-8")

    timings: list[dict] = []
    lock = threading.Lock()

    def runner(record: QARecord, agent_cfg):
        agent_cfg = agent_cfg.with_(task_kind=cfg.task_kind_for(record.dataset))
        trace = run_method(cfg.method, record.context, record.input, agent_cfg, embedder,
                           backend, record.record_id)
        with lock:
            timings.append({"record_id": record.record_id, "seed": agent_cfg.seed,
                            "wall_time": trace.wall_time})
        return trace

    results, summary = evaluate(records, runner, cfg.agent_config(), cfg.seeds, cfg.method,
                                trace_dir=trace_dir, max_parallel=cfg.max_parallel)
    summary = {"method": cfg.method, "version": __version__, **summary}
    with (out / "results.jsonl").open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    _json_dump(summary, out / "summary.json")
    # wall-clock numbers live apart from the reproducible outputs
    with (out / "timings.jsonl").open("w", encoding="utf-8") as fh:
        for t in sorted(timings, key=lambda t: (t["record_id"], t["seed"])):
            fh.write(json.dumps(t) + "\n")
    return results, summary


def format_summary(summary: dict) -> str:
    lines = [f"{'dataset':<24} {'F1':>8} {'stderr':>8} {'n':>5}"]
    for ds, row in summary["datasets"].items():
        lines.append(f"{ds:<24} {100 * row['mean_f1']:>8.2f} {100 * row['stderr']:>8.2f} "
                     f"{row['n_records']:>5}")
    lines.append(f"{'average':<24} {100 * summary['average']:>8.2f}")
    return "\n".join(lines)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, _overrides(args))
        results, summary = execute_run(cfg)
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ConfigError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_summary(summary))
    errors = [r for r in results if r.error]
    if errors:
        print(f"warning: {len(errors)} of {len(results)} runs failed", file=sys.stderr)
        if len(errors) == len(results) and all(r.error.startswith(_PROVIDER_ERRORS) for r in errors):
            return EXIT_PROVIDER
    return EXIT_OK


# -- compare --------------------------------------------------------------------

def load_results(run_dir: Path) -> list[EvalResult]:
    path = run_dir / "results.jsonl"
    if not path.exists():
        raise ConfigError(f"{run_dir} has no results.jsonl")
    with path.open(encoding="utf-8") as fh:
        return [EvalResult.from_dict(json.loads(line)) for line in fh if line.strip()]


def compare_table(result_sets: dict[str, list[EvalResult]]) -> dict:
    """Per-dataset mean F1 per label over the record ids every set contains."""
    if len(result_sets) < 2:
        raise ConfigError("compare needs at least two result sets")
    common = set.intersection(*({r.record_id for r in rs} for rs in result_sets.values()))
    if not common:
        raise NoOverlap("the result sets share no record ids")
    labels = list(result_sets)
    cells: dict[str, dict[str, float]] = defaultdict(dict)
    for label, rs in result_sets.items():
        by_ds: dict[str, list[float]] = defaultdict(list)
        for r in rs:
            if r.record_id in common:
                by_ds[r.dataset].append(r.f1)
        for ds, vals in by_ds.items():
            cells[ds][label] = float(np.mean(vals))
    rows = {ds: cells[ds] for ds in sorted(cells)}
    rows["average"] = {lab: float(np.mean([rows[ds][lab] for ds in cells if lab in rows[ds]]))
                       for lab in labels}
    best = {}
    for ds, row in rows.items():
        top = max(row.values())
        best[ds] = sorted(lab for lab, v in row.items() if abs(v - top) <= 1e-12)
    return {"labels": labels, "n_common": len(common), "rows": rows, "best": best}


def format_compare(table: dict) -> str:
    labels = table["labels"]
    width = max(10, *(len(lab) + 2 for lab in labels))
    lines = [f"{'dataset':<24}" + "".join(f"{lab:>{width}}" for lab in labels)]
    for ds, row in table["rows"].items():
        cells = []
        for lab in labels:
            if lab not in row:
                cells.append(f"{'-':>{width}}")
                continue
            mark = "*" if lab in table["best"][ds] else " "
            cells.append(f"{100 * row[lab]:>{width - 1}.2f}{mark}")
        lines.append(f"{ds:<24}" + "".join(cells))
    lines.append(f"({table['n_common']} shared records; * marks the best per row)")
    return "\n".join(lines)


def _labels(dirs: Sequence[Path]) -> list[str]:
    methods = []
    for d in dirs:
        summary = d / "summary.json"
        method = json.loads(summary.read_text())["method"] if summary.exists() else d.name
        methods.append(method)
    if len(set(methods)) == len(methods):
        return methods
    return [f"{m}:{d.name}" for m, d in zip(methods, dirs)]


def cmd_compare(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.run_dirs]
    try:
        sets = {lab: load_results(d) for lab, d in zip(_labels(dirs), dirs)}
        table = compare_table(sets)
    except (NoOverlap, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(table, indent=2, sort_keys=True) if args.json else format_compare(table))
    return EXIT_OK


# -- analyze --------------------------------------------------------------------

def _trace_files(path: Path) -> list[Path]:
    if (path / "traces").is_dir():
        path = path / "traces"
    return sorted(path.glob("*.jsonl")) if path.is_dir() else []


def _analysis_embedder(dirs: Sequence[Path], traces: Sequence[RunTrace]) -> Embedder:
    for d in dirs:
        if (d / "config.yaml").exists():
            return build_embedder(load_config(d / "config.yaml"))
    for t in traces:
        if t.embedder:
            return embedder_from_identity(t.embedder)
    return HashEmbedder()


def first_step_checks(trace: RunTrace, embedder: Embedder) -> list[dict]:
    """Per path: the first greedy score against the best single-chunk query similarity."""
    if trace.method != "goa" or trace.forest is None:
        return []
    qvec = embedder.embed_batch([trace.query])[0]
    rows = []
    for path in trace.forest.paths:
        members = sorted(path.member_ids)
        vecs = embedder.embed_batch([trace.chunk(i).text for i in members])
        sims = [float(np.clip(qvec @ v, -1.0, 1.0)) for v in vecs]
        rows.append({"record_id": trace.record_id, "seed": trace.seed,
                     "path": path.cluster_index, "first_score": path.selection_scores[0],
                     "final_score": path.selection_scores[-1],
                     "best_single_chunk": max(sims)})
    return rows


def analyze(dirs: Sequence[Path], out_dir: Path) -> tuple[dict, list[str]]:
    files = [f for d in dirs for f in _trace_files(d)]
    if not files:
        raise ConfigError(f"no trace files under {', '.join(map(str, dirs))}")
    traces = [RunTrace.read(f) for f in files]
    embedder = _analysis_embedder(dirs, traces)
    stats, rows = similarity_analysis(traces, embedder)
    violations = [v for t in traces for v in audit_trace(t, embedder)]
    dominance = [row for t in traces for row in first_step_checks(t, embedder)]
    report = {"n_traces": len(traces), "embedder": embedder.identity, "similarity": stats,
              "first_step_dominance": dominance, "violations": violations}

    out_dir.mkdir(parents=True, exist_ok=True)
    _json_dump(report, out_dir / "analysis.json")
    with (out_dir / "similarity.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "record_id", "seed", "similarity"])
        writer.writeheader()
        writer.writerows(rows)
    return report, violations


def format_stats(stats: dict) -> str:
    cols = ("n", "mean", "median", "q1", "q3", "whisker_low", "whisker_high")
    lines = [f"{'method':<18}" + "".join(f"{c:>13}" for c in cols)]
    for method, s in stats.items():
        lines.append(f"{method:<18}{s['n']:>13}" +
                     "".join(f"{s[c]:>13.6f}" for c in cols[1:]))
    return "\n".join(lines)


def cmd_analyze(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.paths]
    out_dir = Path(args.out) if args.out else dirs[0]
    try:
        report, violations = analyze(dirs, out_dir)
        if violations:
            raise AuditFailure(violations)
    except AuditFailure as exc:
        for v in exc.violations:
            print(f"audit: {v}", file=sys.stderr)
        print(f"{len(exc.violations)} audit violation(s)", file=sys.stderr)
        return EXIT_AUDIT
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ConfigError, GoaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_stats(report["similarity"]))
    print(f"{report['n_traces']} traces audited, no violations")
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    print(json.dumps(schema(), indent=2, sort_keys=True))
    return EXIT_OK


# -- entry ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"goa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate one method over a dataset")
    run.add_argument("config", nargs="?", help="YAML run config (defaults apply when omitted)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config key by dotted path, e.g. backend.model=x")
    run.add_argument("--method", choices=["goa", "vanilla", "rag", "coa", "parallel_agents"])
    run.add_argument("--k", type=int)
    run.add_argument("--t-max", dest="t_max", type=int)
    run.add_argument("--seeds", help="comma-separated seed list")
    run.add_argument("--dataset")
    run.add_argument("--output-dir", dest="output_dir")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="side-by-side F1 of several runs")
    cmp_.add_argument("run_dirs", nargs="+")
    cmp_.add_argument("--json", action="store_true")
    cmp_.set_defaults(func=cmd_compare)

    ana = sub.add_parser("analyze", help="similarity statistics and trace audits")
    ana.add_argument("paths", nargs="+", help="run directories or trace directories")
    ana.add_argument("--out", help="where to write analysis.json and similarity.csv")
    ana.set_defaults(func=cmd_analyze)

    sch = sub.add_parser("schema", help="print the config JSON schema")
    sch.set_defaults(func=cmd_schema)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
