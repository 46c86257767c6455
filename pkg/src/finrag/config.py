"""Run configuration: one declarative YAML file plus flag overrides.

Secrets never live in the file; chat backends name the environment
variables that hold the base URL and API key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from finrag.data import DatasetBundle, Qrels, load_corpus, load_qrels, load_queries
from finrag.errors import ConfigError, ValidationError
from finrag.generation import TokenBudget
from finrag.llm import CachedChatBackend, ChatBackend, OpenAIChatBackend, mock_from_script
from finrag.pre_retrieval import DEFAULT_SUMMARY_FLOOR_TOKENS, CorpusMode, QueryMode
from finrag.prompts import PROMPT_VERSION
from finrag.reranking import (
    BM25Backend,
    CachedScoringBackend,
    CascadeConfig,
    DatasetRouting,
    FixtureBackend,
    OracleBackend,
    RemoteRerankBackend,
    ScoringBackend,
)


@dataclass
class ChatSettings:
    kind: str = "scripted"  # scripted | openai
    script: str | None = None
    base_url_env: str = "OPENAI_BASE_URL"
    api_key_env: str = "OPENAI_API_KEY"
    expansion_model: str = "gpt-4o-mini"
    summary_model: str = "gpt-4o"
    generation_model: str = "gpt-4o"


@dataclass
class RunConfig:
    dataset_name: str
    queries: str
    corpus: str
    qrels: str | None = None
    query_mode: QueryMode = QueryMode.ORIGINAL
    corpus_mode: CorpusMode = CorpusMode.ORIGINAL
    routing: DatasetRouting = field(default_factory=DatasetRouting)
    budget: TokenBudget = field(default_factory=TokenBudget)
    chat: ChatSettings | None = None
    scoring: dict[str, dict] = field(default_factory=dict)
    output_dir: str = "out"
    cache_dir: str | None = None
    use_cache: bool = True
    threads: int = 1
    summary_floor_tokens: int = DEFAULT_SUMMARY_FLOOR_TOKENS
    base_dir: Path = field(default_factory=Path)

    # -- parsing ---------------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: dict[str, Any], base_dir: str | Path = ".") -> "RunConfig":
        for required in ("dataset_name", "queries", "corpus"):
            if required not in raw:
                raise ConfigError(f"config field '{required}' is required")
        try:
            query_mode = QueryMode(raw.get("query_mode", "original"))
        except ValueError:
            raise ConfigError(
                f"config field 'query_mode' must be one of {[m.value for m in QueryMode]}, "
                f"got {raw.get('query_mode')!r}"
            ) from None
        try:
            corpus_mode = CorpusMode(raw.get("corpus_mode", "original"))
        except ValueError:
            raise ConfigError(
                f"config field 'corpus_mode' must be one of {[m.value for m in CorpusMode]}, "
                f"got {raw.get('corpus_mode')!r}"
            ) from None

        budget_raw = raw.get("budget", {})
        budget = TokenBudget(
            limit=int(budget_raw.get("limit", TokenBudget().limit)),
            tokenizer_id=str(budget_raw.get("tokenizer", "approx")),
        )

        routing_raw = raw.get("routing", {})
        routing = DatasetRouting(
            configs={name: _parse_cascade(spec, f"routing.datasets.{name}") for name, spec in routing_raw.get("datasets", {}).items()},
            default=_parse_cascade(routing_raw["default"], "routing.default") if "default" in routing_raw else None,
        )

        chat = None
        if "chat" in raw and raw["chat"] is not None:
            chat_raw = dict(raw["chat"])
            kind = chat_raw.get("kind", "scripted")
            if kind not in ("scripted", "openai"):
                raise ConfigError(f"config field 'chat.kind' must be 'scripted' or 'openai', got {kind!r}")
            chat = ChatSettings(
                kind=kind,
                script=chat_raw.get("script"),
                base_url_env=chat_raw.get("base_url_env", "OPENAI_BASE_URL"),
                api_key_env=chat_raw.get("api_key_env", "OPENAI_API_KEY"),
                expansion_model=chat_raw.get("expansion_model", "gpt-4o-mini"),
                summary_model=chat_raw.get("summary_model", "gpt-4o"),
                generation_model=chat_raw.get("generation_model", "gpt-4o"),
            )

        return cls(
            dataset_name=str(raw["dataset_name"]),
            queries=str(raw["queries"]),
            corpus=str(raw["corpus"]),
            qrels=None if raw.get("qrels") is None else str(raw["qrels"]),
            query_mode=query_mode,
            corpus_mode=corpus_mode,
            routing=routing,
            budget=budget,
            chat=chat,
            scoring={str(k): dict(v) for k, v in raw.get("scoring", {}).items()},
            output_dir=str(raw.get("output_dir", "out")),
            cache_dir=None if raw.get("cache_dir") is None else str(raw["cache_dir"]),
            use_cache=bool(raw.get("use_cache", True)),
            threads=int(raw.get("threads", 1)),
            summary_floor_tokens=int(raw.get("summary_floor_tokens", DEFAULT_SUMMARY_FLOOR_TOKENS)),
            base_dir=Path(base_dir),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "dataset_name": self.dataset_name,
            "queries": self.queries,
            "corpus": self.corpus,
            "qrels": self.qrels,
            "query_mode": self.query_mode.value,
            "corpus_mode": self.corpus_mode.value,
            "budget": {"limit": self.budget.limit, "tokenizer": self.budget.tokenizer_id},
            "routing": {
                "datasets": {name: _cascade_to_dict(cfg) for name, cfg in self.routing.configs.items()},
            },
            "scoring": self.scoring,
            "output_dir": self.output_dir,
            "cache_dir": self.cache_dir,
            "use_cache": self.use_cache,
            "threads": self.threads,
            "summary_floor_tokens": self.summary_floor_tokens,
        }
        if self.routing.default is not None:
            out["routing"]["default"] = _cascade_to_dict(self.routing.default)
        if self.chat is not None:
            out["chat"] = {
                "kind": self.chat.kind,
                "script": self.chat.script,
                "base_url_env": self.chat.base_url_env,
                "api_key_env": self.chat.api_key_env,
                "expansion_model": self.chat.expansion_model,
                "summary_model": self.chat.summary_model,
                "generation_model": self.chat.generation_model,
            }
        return out

    # -- validation and wiring -------------------------------------------

    def _resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def validate_paths(self, need_qrels: bool = False) -> None:
        for name, rel in (("queries", self.queries), ("corpus", self.corpus)):
            if not self._resolve(rel).exists():
                raise ConfigError(f"config field '{name}': path does not exist: {self._resolve(rel)}")
        if self.qrels is not None and not self._resolve(self.qrels).exists():
            raise ConfigError(f"config field 'qrels': path does not exist: {self._resolve(self.qrels)}")
        if need_qrels and self.qrels is None:
            raise ConfigError("config field 'qrels' is required for this command")
        if self.chat is not None and self.chat.kind == "scripted":
            if self.chat.script is None:
                raise ConfigError("config field 'chat.script' is required for the scripted chat backend")
            if not self._resolve(self.chat.script).exists():
                raise ConfigError(f"config field 'chat.script': path does not exist: {self._resolve(self.chat.script)}")

    def load_bundle(self) -> DatasetBundle:
        return DatasetBundle(
            name=self.dataset_name,
            queries=load_queries(self._resolve(self.queries)),
            corpus=load_corpus(self._resolve(self.corpus)),
            qrels=load_qrels(self._resolve(self.qrels)) if self.qrels is not None else None,
        )

    def resolved_cache_dir(self) -> Path | None:
        if not self.use_cache:
            return None
        rel = self.cache_dir if self.cache_dir is not None else str(Path(self.output_dir) / "cache")
        return self._resolve(rel)

    def build_chat_backend(self) -> ChatBackend | None:
        if self.chat is None:
            return None
        if self.chat.kind == "scripted":
            if self.chat.script is None:
                raise ConfigError("config field 'chat.script' is required for the scripted chat backend")
            backend: ChatBackend = mock_from_script(self._resolve(self.chat.script))
        else:
            backend = OpenAIChatBackend(base_url_env=self.chat.base_url_env, api_key_env=self.chat.api_key_env)
        cache = self.resolved_cache_dir()
        if cache is not None:
            backend = CachedChatBackend(backend, cache / "chat", version=PROMPT_VERSION)
        return backend

    def build_scoring_registry(self, qrels: Qrels | None) -> dict[str, ScoringBackend]:
        registry: dict[str, ScoringBackend] = {}
        cache = self.resolved_cache_dir()
        for backend_id, spec in self.scoring.items():
            kind = spec.get("kind")
            if kind == "bm25":
                registry[backend_id] = BM25Backend(backend_id=backend_id)
            elif kind == "oracle":
                if qrels is None:
                    raise ConfigError(f"scoring backend '{backend_id}' needs qrels, none configured")
                registry[backend_id] = OracleBackend(qrels, backend_id=backend_id)
            elif kind == "fixture":
                registry[backend_id] = _fixture_from_spec(backend_id, spec, self._resolve)
            elif kind == "remote":
                if "url" not in spec or "model" not in spec:
                    raise ConfigError(f"scoring backend '{backend_id}' needs 'url' and 'model'")
                remote: ScoringBackend = RemoteRerankBackend(
                    url=str(spec["url"]),
                    model=str(spec["model"]),
                    backend_id=backend_id,
                    timeout=float(spec.get("timeout", 60.0)),
                )
                if cache is not None:
                    remote = CachedScoringBackend(remote, cache / "scores")
                registry[backend_id] = remote
            else:
                raise ConfigError(f"scoring backend '{backend_id}' has unknown kind {kind!r}")
        return registry


def _parse_cascade(spec: dict, where: str) -> CascadeConfig:
    for required in ("stage1", "stage2"):
        if required not in spec:
            raise ConfigError(f"config field '{where}.{required}' is required")
    try:
        return CascadeConfig(
            stage1_backend=str(spec["stage1"]),
            stage2_backend=str(spec["stage2"]),
            k1=int(spec.get("k1", 200)),
            k2=int(spec.get("k2", 10)),
        )
    except ValidationError as e:
        raise ConfigError(f"config field '{where}': {e}") from e


def _cascade_to_dict(cfg: CascadeConfig) -> dict:
    return {"stage1": cfg.stage1_backend, "stage2": cfg.stage2_backend, "k1": cfg.k1, "k2": cfg.k2}


def _fixture_from_spec(backend_id: str, spec: dict, resolve) -> FixtureBackend:
    raw: dict
    if "scores" in spec and isinstance(spec["scores"], str):
        path = resolve(spec["scores"])
        if not path.exists():
            raise ConfigError(f"scoring backend '{backend_id}': scores file does not exist: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
    else:
        raw = spec.get("scores", {})
    flat: dict[str, float] = {}
    nested: dict[str, dict[str, float]] = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            nested[key] = {d: float(s) for d, s in value.items()}
        else:
            flat[key] = float(value)
    return FixtureBackend(
        scores=flat, per_query=nested, default=float(spec.get("default", 0.0)), backend_id=backend_id
    )
