"""Prompt templates, stored verbatim as package assets."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import TemplateError

PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "worker": ("input_chunk", "prev_cu", "query"),
    "manager_single": ("summary", "query"),
    "manager_multi": ("summary", "query"),
    "vanilla_single": ("context", "input"),
    "vanilla_multi": ("context", "input"),
}
TEMPLATE_NAMES = tuple(PLACEHOLDERS)
TASK_KINDS = ("single_doc_qa", "multi_doc_qa")

WORKER_HEADER = "[Summary of Worker {i} out of {k}]"
SUMMARY_SEPARATOR = "\n\n"

_PLACEHOLDER_RE = re.compile(r"\{(input_chunk|prev_cu|query|summary|context|input)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        return PLACEHOLDERS[self.name]

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.body.encode("utf-8")).hexdigest()

    def render(self, **values: str) -> str:
        expected = set(self.placeholders)
        if set(values) != expected:
            missing = sorted(expected - set(values))
            extra = sorted(set(values) - expected)
            raise TemplateError(f"{self.name}: missing {missing}, unexpected {extra}")
        # single pass, so placeholder-like text inside values is never expanded
        return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], self.body)


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    if name not in PLACEHOLDERS:
        raise TemplateError(f"unknown template {name!r}")
    body = resources.files("goa").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    found = _PLACEHOLDER_RE.findall(body)
    if sorted(found) != sorted(PLACEHOLDERS[name]):
        raise TemplateError(f"{name}: template placeholders {found} != {list(PLACEHOLDERS[name])}")
    return PromptTemplate(name, body)


def _kind_suffix(task_kind: str) -> str:
    if task_kind not in TASK_KINDS:
        raise TemplateError(f"unknown task kind {task_kind!r}")
    return "single" if task_kind == "single_doc_qa" else "multi"


def worker_prompt(chunk_text: str, prev_summary: str, query: str) -> str:
    return load_template("worker").render(input_chunk=chunk_text, prev_cu=prev_summary, query=query)


def join_summaries(summaries: list[str]) -> str:
    """Concatenate final path summaries for the manager.

    Several summaries each get a worker header; a lone summary (a chain, or a
    forest with one path) is passed through bare.
    """
    if len(summaries) == 1:
        return summaries[0]
    k = len(summaries)
    return SUMMARY_SEPARATOR.join(
        f"{WORKER_HEADER.format(i=i, k=k)}\n{s}" for i, s in enumerate(summaries, start=1))


def manager_prompt(summaries: list[str], query: str, task_kind: str) -> str:
    template = load_template(f"manager_{_kind_suffix(task_kind)}")
    return template.render(summary=join_summaries(summaries), query=query)


def vanilla_prompt(context: str, query: str, task_kind: str) -> str:
    return load_template(f"vanilla_{_kind_suffix(task_kind)}").render(context=context, input=query)
