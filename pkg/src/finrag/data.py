"""Dataset loading and run-file persistence.

File formats:
- queries.jsonl / corpus.jsonl: one JSON object per line (BEIR style),
  fields ``_id``, ``text``, optional ``title``, optional ``tables``.
- qrels.tsv: ``query-id<TAB>corpus-id<TAB>score``, optional header row.
- run file: ``query-id<TAB>doc-id<TAB>rank<TAB>score`` with the score
  printed to 6 decimal places.

A ``tables`` value is a JSON array of tables.  Each table is either an
object ``{"caption": ..., "cells": [[row, col, value], ...]}``, a bare
array of ``[row, col, value]`` triples, or a single triple.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from finrag.errors import FinragError, ParseError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValidationError("query id must be non-empty")
        if not self.text.strip():
            raise ValidationError(f"query '{self.id}' has empty text")


@dataclass(frozen=True)
class TableBlock:
    cells: tuple[tuple[str, str, str], ...]
    caption: str | None = None

    def __post_init__(self):
        if not self.cells:
            raise ValidationError("table block has no cells")
        for cell in self.cells:
            if len(cell) != 3:
                raise ValidationError(f"table cell is not a (row, column, value) triple: {cell!r}")
            if not any(part.strip() for part in cell):
                raise ValidationError("table cell has all three components empty")


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    title: str | None = None
    tables: tuple[TableBlock, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValidationError("document id must be non-empty")
        if not self.text.strip() and not self.tables:
            raise ValidationError(f"document '{self.id}' has neither text nor tables")


@dataclass
class Qrels:
    """Graded relevance judgments: query-id -> doc-id -> grade (>= 0)."""

    judgments: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        for qid, docs in self.judgments.items():
            if not qid:
                raise ValidationError("qrels contain an empty query id")
            for did, grade in docs.items():
                if grade < 0:
                    raise ValidationError(f"qrels grade for ({qid}, {did}) is negative: {grade}")

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get(query_id, {}).get(doc_id, 0)

    def query_ids(self) -> set[str]:
        return set(self.judgments)


@dataclass(frozen=True)
class RunRow:
    query_id: str
    doc_id: str
    rank: int
    score: float


@dataclass
class RunFile:
    """Per-query rankings; rows are kept sorted by (query_id, rank)."""

    rows: list[RunRow]

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.query_id, r.rank))
        seen_pairs: set[tuple[str, str]] = set()
        by_query: dict[str, list[RunRow]] = {}
        for row in self.rows:
            pair = (row.query_id, row.doc_id)
            if pair in seen_pairs:
                raise ValidationError(f"duplicate run pair {pair}")
            seen_pairs.add(pair)
            by_query.setdefault(row.query_id, []).append(row)
        for qid, rows in by_query.items():
            ranks = [r.rank for r in rows]
            if ranks != list(range(1, len(rows) + 1)):
                raise ValidationError(f"ranks for query '{qid}' are not contiguous from 1: {ranks}")
            scores = [r.score for r in rows]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise ValidationError(f"scores for query '{qid}' increase with rank")

    def query_ids(self) -> list[str]:
        out: list[str] = []
        for row in self.rows:
            if not out or out[-1] != row.query_id:
                out.append(row.query_id)
        return out

    def rows_for(self, query_id: str) -> list[RunRow]:
        return [r for r in self.rows if r.query_id == query_id]


@dataclass
class DatasetBundle:
    """A dataset as the pipeline consumes it: queries, corpus, judgments."""

    name: str
    queries: list[Query]
    corpus: list[Document]
    qrels: Qrels | None = None


def _iter_jsonl(path: Path):
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: malformed JSON line: {e}") from e


def load_queries(path: str | Path) -> list[Query]:
    """Load queries from a JSONL file, preserving file order."""
    path = Path(path)
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if "_id" not in obj or "text" not in obj:
            raise ParseError(f"{path}:{lineno}: query line missing '_id' or 'text'")
        qid = str(obj["_id"])
        if qid in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate query id '{qid}'")
        seen.add(qid)
        queries.append(Query(id=qid, text=str(obj["text"])))
    return queries


def _parse_triple(raw, where: str) -> tuple[str, str, str]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise ParseError(f"{where}: table cell must be a [row, column, value] triple, got {raw!r}")
    return (str(raw[0]), str(raw[1]), str(raw[2]))


def _parse_table(raw, where: str) -> TableBlock:
    if isinstance(raw, dict):
        cells = tuple(_parse_triple(c, where) for c in raw.get("cells", []))
        caption = raw.get("caption")
        return TableBlock(cells=cells, caption=None if caption is None else str(caption))
    if isinstance(raw, list):
        if raw and all(isinstance(x, str) for x in raw):
            # single bare triple
            return TableBlock(cells=(_parse_triple(raw, where),))
        return TableBlock(cells=tuple(_parse_triple(c, where) for c in raw))
    raise ParseError(f"{where}: table entry must be an object or an array, got {type(raw).__name__}")


def load_corpus(path: str | Path) -> list[Document]:
    """Load documents from a JSONL file, preserving file order."""
    path = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if "_id" not in obj:
            raise ParseError(f"{path}:{lineno}: corpus line missing '_id'")
        did = str(obj["_id"])
        if did in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate document id '{did}'")
        seen.add(did)
        where = f"{path}:{lineno}"
        tables = tuple(_parse_table(t, where) for t in obj.get("tables", []))
        title = obj.get("title")
        docs.append(
            Document(
                id=did,
                text=str(obj.get("text", "")),
                title=None if title is None else str(title),
                tables=tables,
            )
        )
    return docs


def load_qrels(path: str | Path) -> Qrels:
    """Load TREC-style qrels; later duplicates overwrite with a warning."""
    path = Path(path)
    judgments: dict[str, dict[str, int]] = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            qid, did, raw_score = parts
            try:
                score = int(raw_score)
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ParseError(f"{path}:{lineno}: non-integer relevance score {raw_score!r}") from None
            if score < 0:
                raise ParseError(f"{path}:{lineno}: negative relevance score {score}")
            if not qid:
                raise ParseError(f"{path}:{lineno}: empty query id")
            per_query = judgments.setdefault(qid, {})
            if did in per_query:
                log.warning("%s:%d: duplicate qrels pair (%s, %s); keeping the later grade", path, lineno, qid, did)
            per_query[did] = score
    return Qrels(judgments=judgments)


def write_run(run: RunFile, path: str | Path) -> None:
    """Write a run file with deterministic byte output.

    Rows are sorted by (query-id ascending, rank ascending) and scores
    printed with 6 decimal places, so identical runs produce identical
    files.
    """
    path = Path(path)
    rows = sorted(run.rows, key=lambda r: (r.query_id, r.rank))
    try:
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(f"{row.query_id}\t{row.doc_id}\t{row.rank}\t{row.score:.6f}\n")
    except OSError as e:
        raise FinragError(f"failed to write run file {path}: {e}") from e


def load_run(path: str | Path) -> RunFile:
    """Read a run file written by :func:`write_run`."""
    path = Path(path)
    rows: list[RunRow] = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            qid, did, raw_rank, raw_score = parts
            try:
                rank = int(raw_rank)
                score = float(raw_score)
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: bad rank or score: {e}") from None
            rows.append(RunRow(query_id=qid, doc_id=did, rank=rank, score=score))
    return RunFile(rows=rows)
