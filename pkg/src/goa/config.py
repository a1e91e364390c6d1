"""File-backed run configuration.

A run is described by one YAML file validated against :class:`RunConfig`
(unknown keys are rejected). Credentials come only from environment variables.
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .agents import DEFAULT_K, MANAGER_MAX_TOKENS, RAG_CHUNK_WORDS, TEMPERATURE, TOP_P, AgentRunConfig
from .backends import ChatBackend, MockBackend, RemoteChatBackend
from .embedding import CachedEmbedder, Embedder, EndpointConfig, HashEmbedder, RemoteEmbedder
from .errors import ConfigError

MULTI_DOC_DATASETS = frozenset({"hotpotqa", "2wikimqa", "musique", "synth_multi"})


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EmbedderSection(_Strict):
    provider: Literal["hash", "remote"] = "hash"
    model: Optional[str] = None
    endpoint: Optional[str] = None
    api_key_env: str = "EMBED_API_KEY"
    dim: int = Field(256, ge=8)
    seed: int = 0
    batch_size: int = Field(64, ge=1)
    timeout: float = Field(60.0, gt=0)


class BackendSection(_Strict):
    provider: Literal["mock", "remote"] = "mock"
    model: Optional[str] = None
    endpoint: Optional[str] = None
    api_key_env: str = "LLM_API_KEY"
    timeout: float = Field(120.0, gt=0)


class RunConfig(_Strict):
    method: Literal["goa", "vanilla", "rag", "coa", "parallel_agents"] = "goa"
    t_max: int = Field(2048, ge=1)
    k: int = Field(DEFAULT_K, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    task_kind: Literal["auto", "single_doc_qa", "multi_doc_qa"] = "auto"
    temperature: float = TEMPERATURE
    top_p: float = TOP_P
    worker_max_tokens: Optional[int] = Field(None, ge=1)
    manager_max_tokens: int = Field(MANAGER_MAX_TOKENS, ge=1)
    clustering: Literal["kmedoids", "kmeans"] = "kmedoids"
    selection_policy: Literal["greedy", "document_order", "query_only"] = "greedy"
    retriever: Literal["embedding", "bm25"] = "embedding"
    rag_chunk_words: int = Field(RAG_CHUNK_WORDS, ge=1)
    rag_order: Literal["document", "score"] = "document"
    dataset: str = "builtin:fixture"
    output_dir: str = "runs/latest"
    max_parallel: int = Field(4, ge=1)
    lenient: bool = False
    embedder: EmbedderSection = Field(default_factory=EmbedderSection)
    backend: BackendSection = Field(default_factory=BackendSection)

    def agent_config(self, task_kind: str = "single_doc_qa") -> AgentRunConfig:
        return AgentRunConfig(
            t_max=self.t_max, worker_max_tokens=self.worker_max_tokens,
            manager_max_tokens=self.manager_max_tokens, temperature=self.temperature,
            top_p=self.top_p, k=self.k, task_kind=task_kind, clustering=self.clustering,
            selection_policy=self.selection_policy, retriever=self.retriever,
            rag_chunk_words=self.rag_chunk_words, rag_order=self.rag_order,
            max_parallel=self.max_parallel, seed=self.seeds[0])

    def task_kind_for(self, dataset: str) -> str:
        if self.task_kind != "auto":
            return self.task_kind
        return "multi_doc_qa" if dataset.lower() in MULTI_DOC_DATASETS else "single_doc_qa"

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def schema() -> dict:
    return RunConfig.model_json_schema()


def set_dotted(data: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {key} is not a section")
    node[keys[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else ""


def build_config(data: dict | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    data = copy.deepcopy(data or {})
    for key, value in (overrides or {}).items():
        set_dotted(data, key, value)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = build_config(data, overrides)
    # relative dataset paths resolve against the config file
    if path is not None and not cfg.dataset.startswith("builtin:"):
        ds = Path(cfg.dataset)
        if not ds.is_absolute() and not ds.exists():
            candidate = Path(path).parent / ds
            if candidate.exists():
                cfg = cfg.model_copy(update={"dataset": str(candidate)})
    return cfg


def dataset_path(cfg: RunConfig) -> Path:
    if cfg.dataset.startswith("builtin:"):
        name = cfg.dataset.split(":", 1)[1]
        ref = resources.files("goa").joinpath("data", f"{name}.jsonl")
        if not ref.is_file():
            raise ConfigError(f"no bundled dataset named {name!r}")
        return Path(str(ref))
    return Path(cfg.dataset)


def build_backend(cfg: RunConfig) -> ChatBackend:
    section = cfg.backend
    if section.provider == "mock":
        return MockBackend()
    if not section.endpoint or not section.model:
        raise ConfigError("remote backend needs both endpoint and model")
    return RemoteChatBackend(EndpointConfig(section.endpoint, section.model, section.api_key_env,
                                            timeout=section.timeout))


def build_embedder(cfg: RunConfig) -> Embedder:
    section = cfg.embedder
    if section.provider == "hash":
        return CachedEmbedder(HashEmbedder(section.dim, section.seed))
    if not section.endpoint or not section.model:
        raise ConfigError("remote embedder needs both endpoint and model")
    return CachedEmbedder(RemoteEmbedder(
        EndpointConfig(section.endpoint, section.model, section.api_key_env, timeout=section.timeout),
        section.dim, section.batch_size))


def snapshot(cfg: RunConfig) -> str:
    header = f"# written by goa {__version__}\n"
    return header + cfg.to_yaml()
