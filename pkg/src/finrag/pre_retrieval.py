"""Query expansion and corpus transforms applied before retrieval.

Queries can be enriched with extracted keywords, a paraphrase, or a
hypothetical document; the enriched text always concatenates onto the
original query.  Corpora can be passed through as-is, summarized with a
model, or reduced to their flattened tables (documents without tables
fall back to the original serialization so nothing retrievable is lost).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from finrag.data import Document, Query
from finrag.errors import ConfigError, FinragError, ValidationError
from finrag.llm import ChatBackend, ChatRequest, chat
from finrag.prompts import load_prompt
from finrag.tokens import ApproxTokenCounter, TokenCounter


KEYWORDS_SEPARATOR = "\nKeywords: "
PARAPHRASE_SEPARATOR = "\nParaphrase: "
HYPODOC_SEPARATOR = "\n"

DEFAULT_SUMMARY_FLOOR_TOKENS = 256


class QueryMode(str, Enum):
    ORIGINAL = "original"
    PLUS_PARAPHRASE = "plus_paraphrase"
    PLUS_KEYWORDS = "plus_keywords"
    PLUS_HYPODOC = "plus_hypodoc"


class CorpusMode(str, Enum):
    ORIGINAL = "original"
    SUMMARY = "summary"
    TABLE_ONLY = "table_only"


@dataclass(frozen=True)
class ExpandedQuery:
    query_id: str
    original: str
    combined_text: str
    keywords: tuple[str, ...] = ()
    paraphrase: str | None = None
    hypothetical_document: str | None = None

    def __post_init__(self):
        if self.original not in self.combined_text:
            raise ValidationError(f"combined_text for '{self.query_id}' does not contain the original query")
        lowered = [k.lower() for k in self.keywords]
        if any(not k.strip() for k in self.keywords) or len(set(lowered)) != len(lowered):
            raise ValidationError(f"keywords for '{self.query_id}' must be non-empty and deduplicated")


@dataclass(frozen=True)
class ProcessedDocument:
    doc_id: str
    mode: CorpusMode
    retrieval_text: str

    def __post_init__(self):
        if not self.retrieval_text.strip():
            raise ValidationError(f"processed document '{self.doc_id}' has empty retrieval text")


def serialize_tables(doc: Document) -> str:
    """Flatten all table blocks to ``row | column | value`` lines.

    Tables are separated by a blank line; a caption becomes a heading
    line before its cells.
    """
    blocks: list[str] = []
    for table in doc.tables:
        lines: list[str] = []
        if table.caption:
            lines.append(table.caption)
        lines.extend(f"{row} | {col} | {value}" for row, col, value in table.cells)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def serialize_document(doc: Document) -> str:
    """Full as-is serialization: title, body text, then flattened tables."""
    parts = []
    if doc.title:
        parts.append(doc.title)
    if doc.text.strip():
        parts.append(doc.text)
    if doc.tables:
        parts.append(serialize_tables(doc))
    return "\n".join(parts)


def _ask(backend: ChatBackend, prompt: str, query_id: str, model: str, max_tokens: int) -> str:
    try:
        return chat(backend, ChatRequest(user_prompt=prompt, model_name=model, max_output_tokens=max_tokens)).text
    except FinragError as e:
        raise type(e)(f"query '{query_id}': {e}") from e


def extract_keywords(query: Query, backend: ChatBackend, model: str = "gpt-4o-mini") -> list[str]:
    """Model-extracted keywords; semicolon/newline separated in the response.

    An empty response is an empty list, not an error.  Entries are
    trimmed and deduplicated case-insensitively, first spelling kept.
    """
    prompt = load_prompt("keywords").format(query=query.text)
    raw = _ask(backend, prompt, query.id, model, max_tokens=128)
    keywords: list[str] = []
    seen: set[str] = set()
    for part in raw.replace(";", "\n").splitlines():
        part = part.strip()
        if part and part.lower() not in seen:
            seen.add(part.lower())
            keywords.append(part)
    return keywords


def paraphrase(query: Query, backend: ChatBackend, model: str = "gpt-4o-mini") -> str:
    """Model rephrasing of the query, trimmed; empty output is an error."""
    prompt = load_prompt("paraphrase").format(query=query.text)
    text = _ask(backend, prompt, query.id, model, max_tokens=256).strip()
    if not text:
        raise ValidationError(f"paraphrase of query '{query.id}' came back empty")
    return text


def hypothetical_document(query: Query, backend: ChatBackend, model: str = "gpt-4o-mini") -> str:
    """Model-written passage that would plausibly answer the query."""
    prompt = load_prompt("hypodoc").format(query=query.text)
    text = _ask(backend, prompt, query.id, model, max_tokens=512).strip()
    if not text:
        raise ValidationError(f"hypothetical document for query '{query.id}' came back empty")
    return text


def combine_query(
    query: Query,
    mode: QueryMode,
    *,
    keywords: Sequence[str] | None = None,
    paraphrase_text: str | None = None,
    hypodoc_text: str | None = None,
) -> ExpandedQuery:
    """Merge expansion artifacts with the original query text.

    The original query is always the prefix of the combined text; the
    ``original`` mode is the identity.  Empty keyword lists degrade to
    the original query, but an artifact the mode requires must be given.
    """
    if mode is QueryMode.ORIGINAL:
        return ExpandedQuery(query_id=query.id, original=query.text, combined_text=query.text)
    if mode is QueryMode.PLUS_KEYWORDS:
        if keywords is None:
            raise ValidationError(f"mode {mode.value} requires keywords for query '{query.id}'")
        kws = tuple(keywords)
        combined = query.text + KEYWORDS_SEPARATOR + ", ".join(kws) if kws else query.text
        return ExpandedQuery(query_id=query.id, original=query.text, combined_text=combined, keywords=kws)
    if mode is QueryMode.PLUS_PARAPHRASE:
        if not paraphrase_text:
            raise ValidationError(f"mode {mode.value} requires a paraphrase for query '{query.id}'")
        combined = query.text + PARAPHRASE_SEPARATOR + paraphrase_text
        return ExpandedQuery(
            query_id=query.id, original=query.text, combined_text=combined, paraphrase=paraphrase_text
        )
    if mode is QueryMode.PLUS_HYPODOC:
        if not hypodoc_text:
            raise ValidationError(f"mode {mode.value} requires a hypothetical document for query '{query.id}'")
        combined = query.text + HYPODOC_SEPARATOR + hypodoc_text
        return ExpandedQuery(
            query_id=query.id, original=query.text, combined_text=combined, hypothetical_document=hypodoc_text
        )
    raise ConfigError(f"unknown query mode {mode!r}")


def expand_query(
    query: Query,
    mode: QueryMode,
    backend: ChatBackend | None,
    model: str = "gpt-4o-mini",
) -> ExpandedQuery:
    """Run the expansions the mode needs, then combine."""
    if mode is QueryMode.ORIGINAL:
        return combine_query(query, mode)
    if backend is None:
        raise ConfigError(f"query mode {mode.value} needs a chat backend")
    if mode is QueryMode.PLUS_KEYWORDS:
        return combine_query(query, mode, keywords=extract_keywords(query, backend, model))
    if mode is QueryMode.PLUS_PARAPHRASE:
        return combine_query(query, mode, paraphrase_text=paraphrase(query, backend, model))
    return combine_query(query, mode, hypodoc_text=hypothetical_document(query, backend, model))


def expand_queries(
    queries: Sequence[Query],
    mode: QueryMode,
    backend: ChatBackend | None,
    model: str = "gpt-4o-mini",
    threads: int = 1,
) -> list[ExpandedQuery]:
    """Expand all queries, preserving input order regardless of scheduling."""
    if threads <= 1 or mode is QueryMode.ORIGINAL:
        return [expand_query(q, mode, backend, model) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: expand_query(q, mode, backend, model), queries))


def summarize_document(
    doc: Document,
    backend: ChatBackend,
    model: str = "gpt-4o",
    *,
    floor_tokens: int = DEFAULT_SUMMARY_FLOOR_TOKENS,
    counter: TokenCounter | None = None,
) -> ProcessedDocument:
    """Condense one document for retrieval.

    Documents below the token floor skip the model and pass through
    unchanged; summarizing them would cost a call for no compression.
    """
    counter = counter or ApproxTokenCounter()
    full_text = serialize_document(doc)
    if counter.count(full_text) < floor_tokens:
        return ProcessedDocument(doc_id=doc.id, mode=CorpusMode.SUMMARY, retrieval_text=full_text)
    prompt = load_prompt("summary").format(document=full_text)
    try:
        summary = chat(
            backend, ChatRequest(user_prompt=prompt, model_name=model, max_output_tokens=1024)
        ).text.strip()
    except FinragError as e:
        raise type(e)(f"document '{doc.id}': {e}") from e
    if not summary:
        raise ValidationError(f"summary of document '{doc.id}' came back empty")
    return ProcessedDocument(doc_id=doc.id, mode=CorpusMode.SUMMARY, retrieval_text=summary)


def extract_tables(doc: Document) -> ProcessedDocument:
    """Reduce a document to its flattened tables.

    Documents without tables keep their original serialization so the
    retrieval unit never goes empty.
    """
    if doc.tables:
        text = serialize_tables(doc)
    else:
        text = serialize_document(doc)
    return ProcessedDocument(doc_id=doc.id, mode=CorpusMode.TABLE_ONLY, retrieval_text=text)


def process_corpus(
    docs: Sequence[Document],
    mode: CorpusMode,
    backend: ChatBackend | None = None,
    model: str = "gpt-4o",
    *,
    floor_tokens: int = DEFAULT_SUMMARY_FLOOR_TOKENS,
    threads: int = 1,
) -> list[ProcessedDocument]:
    """Apply the per-document transform for the mode, preserving order."""
    if mode is CorpusMode.ORIGINAL:
        transform = lambda d: ProcessedDocument(
            doc_id=d.id, mode=CorpusMode.ORIGINAL, retrieval_text=serialize_document(d)
        )
    elif mode is CorpusMode.TABLE_ONLY:
        transform = extract_tables
    elif mode is CorpusMode.SUMMARY:
        if backend is None:
            raise ConfigError("corpus mode summary needs a chat backend")
        transform = lambda d: summarize_document(d, backend, model, floor_tokens=floor_tokens)
    else:
        raise ConfigError(f"unknown corpus mode {mode!r}")

    if threads <= 1 or mode is not CorpusMode.SUMMARY:
        return [transform(d) for d in docs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(transform, docs))
