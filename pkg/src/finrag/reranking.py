"""Scoring backends and the two-stage rerank cascade.

Stage 1 ranks the whole processed corpus down to the top ``k1``
candidates; stage 2 re-scores only those survivors and keeps the top
``k2``.  Backends share one interface: a batch of (query, document)
pairs in, one finite score per document out, order-aligned.  The remote
backend speaks the ``POST /rerank`` wire protocol.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import requests

from finrag.data import Qrels, RunFile, RunRow
from finrag.errors import ConfigError, FinragError, ProtocolError, TransportError, ValidationError
from finrag.pre_retrieval import ExpandedQuery, ProcessedDocument


DEFAULT_BATCH_SIZE = 32


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValidationError(f"score for doc '{self.doc_id}' is not finite: {self.score}")


@dataclass(frozen=True)
class RankedList:
    """Scores sorted descending, ties broken by doc_id ascending."""

    query_id: str
    entries: tuple[ScoredDoc, ...]

    def __post_init__(self):
        ids = [e.doc_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"ranked list for '{self.query_id}' has duplicate doc ids")
        keys = [(-e.score, e.doc_id) for e in self.entries]
        if keys != sorted(keys):
            raise ValidationError(f"ranked list for '{self.query_id}' is not in (score desc, doc_id asc) order")

    @classmethod
    def from_scores(cls, query_id: str, scored: Sequence[ScoredDoc], k: int | None = None) -> "RankedList":
        ordered = sorted(scored, key=lambda s: (-s.score, s.doc_id))
        if k is not None:
            ordered = ordered[:k]
        return cls(query_id=query_id, entries=tuple(ordered))

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


@dataclass(frozen=True)
class CascadeConfig:
    stage1_backend: str
    stage2_backend: str
    k1: int = 200
    k2: int = 10

    def __post_init__(self):
        if not 0 < self.k2 <= self.k1:
            raise ValidationError(f"need 0 < k2 <= k1, got k1={self.k1} k2={self.k2}")


@dataclass
class DatasetRouting:
    """Per-dataset cascade configs with an optional fallback."""

    configs: dict[str, CascadeConfig] = field(default_factory=dict)
    default: CascadeConfig | None = None


def route(dataset: str, routing: DatasetRouting) -> CascadeConfig:
    """Resolve the cascade config for a dataset, falling back to the default."""
    config = routing.configs.get(dataset)
    if config is not None:
        return config
    if routing.default is not None:
        return routing.default
    raise ConfigError(f"no cascade routing for dataset '{dataset}' and no default configured")


class ScoringBackend(Protocol):
    backend_id: str

    def score_batch(
        self, query_text: str, docs: Sequence[ProcessedDocument], query_id: str = ""
    ) -> list[float]: ...

    def bind_corpus(self, docs: Sequence[ProcessedDocument]) -> "ScoringBackend": ...


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics, dropping empty tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class CorpusStats:
    """Document frequencies over a processed corpus, for BM25."""

    n_docs: int
    avg_doc_len: float
    df: Mapping[str, int]


def build_corpus_stats(docs: Sequence[ProcessedDocument]) -> CorpusStats:
    df: Counter[str] = Counter()
    total_len = 0
    for doc in docs:
        tokens = tokenize(doc.retrieval_text)
        total_len += len(tokens)
        df.update(set(tokens))
    n = len(docs)
    return CorpusStats(n_docs=n, avg_doc_len=total_len / n if n else 0.0, df=dict(df))


def bm25_score(
    query_text: str,
    doc: ProcessedDocument,
    stats: CorpusStats,
    k1: float = 1.2,
    b: float = 0.75,
) -> float:
    """Okapi BM25 with IDF = ln((N - df + 0.5) / (df + 0.5) + 1).

    Every query token contributes (repeated tokens contribute
    repeatedly); terms absent from the document contribute zero.
    """
    doc_tokens = tokenize(doc.retrieval_text)
    tf = Counter(doc_tokens)
    dl = len(doc_tokens)
    norm = dl / stats.avg_doc_len if stats.avg_doc_len > 0 else 0.0
    score = 0.0
    for term in tokenize(query_text):
        freq = tf.get(term, 0)
        if freq == 0:
            continue
        n_t = stats.df.get(term, 0)
        idf = math.log((stats.n_docs - n_t + 0.5) / (n_t + 0.5) + 1.0)
        score += idf * (freq * (k1 + 1.0)) / (freq + k1 * (1.0 - b + b * norm))
    return score


class BM25Backend:
    """Deterministic lexical baseline; stats must cover the scored corpus."""

    def __init__(self, stats: CorpusStats | None = None, backend_id: str = "bm25"):
        self.backend_id = backend_id
        self._stats = stats

    def bind_corpus(self, docs: Sequence[ProcessedDocument]) -> "BM25Backend":
        return BM25Backend(stats=build_corpus_stats(docs), backend_id=self.backend_id)

    def score_batch(
        self, query_text: str, docs: Sequence[ProcessedDocument], query_id: str = ""
    ) -> list[float]:
        if self._stats is None:
            raise ConfigError(f"backend '{self.backend_id}' was not bound to a corpus")
        return [bm25_score(query_text, doc, self._stats) for doc in docs]


class FixtureBackend:
    """Replays stored scores; doc-level map with optional per-query override."""

    def __init__(
        self,
        scores: Mapping[str, float] | None = None,
        per_query: Mapping[str, Mapping[str, float]] | None = None,
        default: float = 0.0,
        backend_id: str = "fixture",
    ):
        self.backend_id = backend_id
        self._scores = dict(scores or {})
        self._per_query = {q: dict(d) for q, d in (per_query or {}).items()}
        self._default = default

    def bind_corpus(self, docs: Sequence[ProcessedDocument]) -> "FixtureBackend":
        return self

    def score_batch(
        self, query_text: str, docs: Sequence[ProcessedDocument], query_id: str = ""
    ) -> list[float]:
        overrides = self._per_query.get(query_id, {})
        return [overrides.get(d.doc_id, self._scores.get(d.doc_id, self._default)) for d in docs]


class OracleBackend:
    """Scores each document with its qrels grade; perfect by construction."""

    def __init__(self, qrels: Qrels, backend_id: str = "oracle"):
        self.backend_id = backend_id
        self._qrels = qrels

    def bind_corpus(self, docs: Sequence[ProcessedDocument]) -> "OracleBackend":
        return self

    def score_batch(
        self, query_text: str, docs: Sequence[ProcessedDocument], query_id: str = ""
    ) -> list[float]:
        if not query_id:
            raise ValidationError("oracle backend needs the query id to look up grades")
        return [float(self._qrels.grade(query_id, d.doc_id)) for d in docs]


class RemoteRerankBackend:
    """Client for the ``POST /rerank`` wire protocol.

    Request: ``{"model", "query", "documents": [{"id", "text"}]}``;
    response: ``{"scores": [...]}`` aligned to request order.
    """

    def __init__(
        self,
        url: str,
        model: str,
        backend_id: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.model = model
        self.backend_id = backend_id or model
        self.timeout = timeout
        self._session = session or requests.Session()

    def bind_corpus(self, docs: Sequence[ProcessedDocument]) -> "RemoteRerankBackend":
        return self

    def score_batch(
        self, query_text: str, docs: Sequence[ProcessedDocument], query_id: str = ""
    ) -> list[float]:
        payload = {
            "model": self.model,
            "query": query_text,
            "documents": [{"id": d.doc_id, "text": d.retrieval_text} for d in docs],
        }
        try:
            resp = self._session.post(self.url, json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"rerank backend '{self.backend_id}' unreachable: {e}") from e
        if resp.status_code != 200:
            raise TransportError(
                f"rerank backend '{self.backend_id}' returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            scores = resp.json()["scores"]
        except (ValueError, KeyError) as e:
            raise ProtocolError(f"rerank backend '{self.backend_id}' sent a malformed response: {e}") from e
        return [float(s) for s in scores]


class CachedScoringBackend:
    """Disk cache around a scoring backend, keyed by request content hash.

    Meant for remote backends; local backends are cheaper than the disk
    round-trip.
    """

    def __init__(self, backend: ScoringBackend, cache_dir):
        import hashlib
        import json
        from pathlib import Path

        self._backend = backend
        self.backend_id = backend.backend_id
        self._dir = Path(cache_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._hashlib = hashlib
        self._json = json

    def bind_corpus(self, docs: Sequence[ProcessedDocument]) -> "CachedScoringBackend":
        bound = self._backend.bind_corpus(docs)
        if bound is self._backend:
            return self
        return CachedScoringBackend(bound, self._dir)

    def score_batch(
        self, query_text: str, docs: Sequence[ProcessedDocument], query_id: str = ""
    ) -> list[float]:
        h = self._hashlib.sha256()
        for part in (self.backend_id, query_text, *(f"{d.doc_id}\x00{d.retrieval_text}" for d in docs)):
            h.update(part.encode("utf-8"))
            h.update(b"\x1e")
        key = self._dir / f"{h.hexdigest()}.json"
        if key.exists():
            return [float(s) for s in self._json.loads(key.read_text(encoding="utf-8"))]
        scores = self._backend.score_batch(query_text, docs, query_id=query_id)
        tmp = key.with_suffix(".tmp")
        tmp.write_text(self._json.dumps(list(scores)), encoding="utf-8")
        tmp.replace(key)
        return scores


def score_pairs(
    backend: ScoringBackend,
    query_text: str,
    docs: Sequence[ProcessedDocument],
    query_id: str = "",
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[ScoredDoc]:
    """Score every document against the query, order-aligned with input.

    Documents are sent in batches (batching never affects the scores);
    a count mismatch or non-finite score from the backend is a protocol
    error naming the backend.
    """
    if not docs:
        raise ValidationError("score_pairs needs a non-empty document list")
    backend_id = getattr(backend, "backend_id", type(backend).__name__)
    out: list[ScoredDoc] = []
    for start in range(0, len(docs), batch_size):
        batch = docs[start : start + batch_size]
        scores = backend.score_batch(query_text, batch, query_id=query_id)
        if len(scores) != len(batch):
            raise ProtocolError(
                f"backend '{backend_id}' returned {len(scores)} scores for {len(batch)} documents"
            )
        for doc, score in zip(batch, scores):
            if not math.isfinite(score):
                raise ProtocolError(f"backend '{backend_id}' returned a non-finite score for doc '{doc.doc_id}'")
            out.append(ScoredDoc(doc_id=doc.doc_id, score=score))
    return out


def rerank_topk(
    query: ExpandedQuery,
    docs: Sequence[ProcessedDocument],
    backend: ScoringBackend,
    k: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> RankedList:
    """Score all docs with the query's combined text and keep the top k."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    scored = score_pairs(backend, query.combined_text, docs, query_id=query.query_id, batch_size=batch_size)
    return RankedList.from_scores(query.query_id, scored, k=k)


def cascade(
    query: ExpandedQuery,
    corpus: Sequence[ProcessedDocument],
    config: CascadeConfig,
    backends: Mapping[str, ScoringBackend],
) -> RankedList:
    """Two-stage rerank: stage 1 filters to top-k1, stage 2 re-scores them.

    Stage 1 always runs, even when the corpus is smaller than k1; the
    final list can only contain stage-1 survivors.
    """
    for stage, backend_id in (("stage 1", config.stage1_backend), ("stage 2", config.stage2_backend)):
        if backend_id not in backends:
            raise ConfigError(f"{stage} backend '{backend_id}' is not registered")

    try:
        first = rerank_topk(query, corpus, backends[config.stage1_backend], config.k1)
    except FinragError as e:
        raise type(e)(f"stage 1 ({config.stage1_backend}): {e}") from e

    by_id = {d.doc_id: d for d in corpus}
    survivors = [by_id[doc_id] for doc_id in first.doc_ids()]

    try:
        return rerank_topk(query, survivors, backends[config.stage2_backend], config.k2)
    except FinragError as e:
        raise type(e)(f"stage 2 ({config.stage2_backend}): {e}") from e


def bind_backends(
    registry: Mapping[str, ScoringBackend], corpus: Sequence[ProcessedDocument]
) -> dict[str, ScoringBackend]:
    """Bind every registered backend to the processed corpus it will score."""
    return {backend_id: backend.bind_corpus(corpus) for backend_id, backend in registry.items()}


def run_cascade(
    queries: Sequence[ExpandedQuery],
    corpus: Sequence[ProcessedDocument],
    config: CascadeConfig,
    registry: Mapping[str, ScoringBackend],
    threads: int = 1,
) -> list[RankedList]:
    """Cascade every query over the corpus; output order matches input order."""
    bound = bind_backends(registry, corpus)
    if threads <= 1:
        return [cascade(q, corpus, config, bound) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: cascade(q, corpus, config, bound), queries))


def rankings_to_run(rankings: Sequence[RankedList]) -> RunFile:
    """Flatten ranked lists into a run file (rank starts at 1 per query)."""
    rows = [
        RunRow(query_id=r.query_id, doc_id=entry.doc_id, rank=i + 1, score=entry.score)
        for r in rankings
        for i, entry in enumerate(r.entries)
    ]
    return RunFile(rows=rows)
