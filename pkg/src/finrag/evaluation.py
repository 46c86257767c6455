"""NDCG@k metrics, run evaluation, the ablation matrix, backend selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from finrag.data import DatasetBundle, Qrels, RunFile
from finrag.errors import ValidationError
from finrag.llm import ChatBackend
from finrag.pre_retrieval import (
    DEFAULT_SUMMARY_FLOOR_TOKENS,
    CorpusMode,
    QueryMode,
    combine_query,
    expand_queries,
    process_corpus,
)
from finrag.reranking import CascadeConfig, RankedList, ScoringBackend, run_cascade

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricReport:
    per_query: dict[str, float]
    mean: float
    k: int = 10
    queries_evaluated: int = 0
    flagged: tuple[str, ...] = ()  # judged queries with no positive grade


@dataclass(frozen=True)
class AblationCell:
    query_mode: QueryMode
    corpus_mode: CorpusMode
    ndcg: float | None
    error: str | None = None


def _ndcg(doc_ids_in_rank_order: Sequence[str], grades: Mapping[str, int], k: int) -> float:
    dcg = 0.0
    for i, doc_id in enumerate(doc_ids_in_rank_order[:k], start=1):
        dcg += grades.get(doc_id, 0) / math.log2(i + 1)
    idcg = 0.0
    for i, grade in enumerate(sorted(grades.values(), reverse=True)[:k], start=1):
        idcg += grade / math.log2(i + 1)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def ndcg_at_k(ranked: RankedList, qrels: Qrels, k: int = 10) -> float:
    """NDCG@k with linear gain: rel / log2(rank + 1).

    A query with no positive judgments scores 0.0 (and is logged);
    documents outside the qrels count as grade 0.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    grades = qrels.judgments.get(ranked.query_id, {})
    if not any(g > 0 for g in grades.values()):
        log.warning("query '%s' has no positive judgments; NDCG@%d defined as 0.0", ranked.query_id, k)
        return 0.0
    return _ndcg(ranked.doc_ids(), grades, k)


def _report(ordered_ids: Mapping[str, Sequence[str]], qrels: Qrels, k: int, include_unjudged: bool) -> MetricReport:
    per_query: dict[str, float] = {}
    flagged: list[str] = []
    for qid, doc_ids in ordered_ids.items():
        grades = qrels.judgments.get(qid)
        if grades is None:
            if include_unjudged:
                per_query[qid] = 0.0
                flagged.append(qid)
            continue
        if not any(g > 0 for g in grades.values()):
            per_query[qid] = 0.0
            flagged.append(qid)
            continue
        per_query[qid] = _ndcg(doc_ids, grades, k)
    if not per_query:
        raise ValidationError("no overlap between run queries and qrels")
    mean = sum(per_query.values()) / len(per_query)
    return MetricReport(
        per_query=per_query,
        mean=mean,
        k=k,
        queries_evaluated=len(per_query),
        flagged=tuple(flagged),
    )


def evaluate_run(run: RunFile, qrels: Qrels, k: int = 10, include_unjudged: bool = False) -> MetricReport:
    """Per-query NDCG@k over a run file; judged queries only by default."""
    ordered: dict[str, list[str]] = {}
    for row in run.rows:  # rows are already (query_id, rank) sorted
        ordered.setdefault(row.query_id, []).append(row.doc_id)
    return _report(ordered, qrels, k, include_unjudged)


def evaluate_rankings(
    rankings: Sequence[RankedList], qrels: Qrels, k: int = 10, include_unjudged: bool = False
) -> MetricReport:
    """As :func:`evaluate_run`, over in-memory ranked lists."""
    ordered = {r.query_id: r.doc_ids() for r in rankings}
    return _report(ordered, qrels, k, include_unjudged)


def report_to_json(report: MetricReport) -> dict:
    return {
        "k": report.k,
        "mean": report.mean,
        "queries_evaluated": report.queries_evaluated,
        "per_query": dict(sorted(report.per_query.items())),
        "flagged": sorted(report.flagged),
    }


FULL_MODE_GRID: tuple[tuple[QueryMode, CorpusMode], ...] = tuple(
    (qm, cm) for qm in QueryMode for cm in CorpusMode
)


def run_ablation(
    bundle: DatasetBundle,
    modes: Sequence[tuple[QueryMode, CorpusMode]],
    *,
    registry: Mapping[str, ScoringBackend],
    config: CascadeConfig,
    chat_backend: ChatBackend | None = None,
    k: int = 10,
    expansion_model: str = "gpt-4o-mini",
    summary_model: str = "gpt-4o",
    summary_floor_tokens: int = DEFAULT_SUMMARY_FLOOR_TOKENS,
    threads: int = 1,
) -> list[AblationCell]:
    """Measure NDCG@k for each (query mode, corpus mode) combination.

    Cells are computed independently; one cell failing never aborts the
    rest of the matrix.
    """
    if len(set(modes)) != len(modes):
        raise ValidationError("ablation matrix has duplicate (query_mode, corpus_mode) pairs")
    if bundle.qrels is None:
        raise ValidationError(f"dataset '{bundle.name}' has no qrels; cannot run the ablation")
    cells: list[AblationCell] = []
    for query_mode, corpus_mode in modes:
        try:
            expanded = expand_queries(bundle.queries, query_mode, chat_backend, expansion_model, threads=threads)
            processed = process_corpus(
                bundle.corpus,
                corpus_mode,
                chat_backend,
                summary_model,
                floor_tokens=summary_floor_tokens,
                threads=threads,
            )
            rankings = run_cascade(expanded, processed, config, registry, threads=threads)
            report = evaluate_rankings(rankings, bundle.qrels, k=k)
            cells.append(AblationCell(query_mode=query_mode, corpus_mode=corpus_mode, ndcg=report.mean))
        except Exception as e:  # noqa: BLE001 - cell isolation is the contract
            log.warning("ablation cell (%s, %s) failed: %s", query_mode.value, corpus_mode.value, e)
            cells.append(AblationCell(query_mode=query_mode, corpus_mode=corpus_mode, ndcg=None, error=str(e)))
    return cells


def render_ablation_table(cells: Sequence[AblationCell], k: int = 10) -> str:
    """Plain-text matrix: one row per mode pair, NDCG column last."""
    header = f"{'query_mode':<17} {'corpus_mode':<12} NDCG@{k}"
    lines = [header, "-" * len(header)]
    for cell in cells:
        value = f"{cell.ndcg:.5f}" if cell.ndcg is not None else f"FAILED ({cell.error})"
        lines.append(f"{cell.query_mode.value:<17} {cell.corpus_mode.value:<12} {value}")
    return "\n".join(lines)


def cells_to_json(cells: Sequence[AblationCell]) -> list[dict]:
    return [
        {
            "query_mode": c.query_mode.value,
            "corpus_mode": c.corpus_mode.value,
            "ndcg": c.ndcg,
            "error": c.error,
        }
        for c in cells
    ]


def select_backends(
    bundles: Sequence[DatasetBundle],
    candidates: Sequence[str],
    registry: Mapping[str, ScoringBackend],
    *,
    stage1_backend: str,
    k1: int = 200,
    k: int = 10,
    threads: int = 1,
) -> dict[str, str]:
    """Pick the best stage-2 backend per dataset by mean NDCG@k.

    Candidates are tried as stage 2 over original queries and corpus;
    exact ties resolve to the lexicographically smaller backend id.
    """
    if not candidates:
        raise ValidationError("need at least one candidate backend")
    selections: dict[str, str] = {}
    for bundle in bundles:
        if bundle.qrels is None:
            raise ValidationError(f"dataset '{bundle.name}' has no qrels; cannot select a backend")
        expanded = [combine_query(q, QueryMode.ORIGINAL) for q in bundle.queries]
        processed = process_corpus(bundle.corpus, CorpusMode.ORIGINAL)
        best_id: str | None = None
        best_score = -1.0
        for candidate in sorted(candidates):
            config = CascadeConfig(stage1_backend=stage1_backend, stage2_backend=candidate, k1=k1, k2=k)
            rankings = run_cascade(expanded, processed, config, registry, threads=threads)
            score = evaluate_rankings(rankings, bundle.qrels, k=k).mean
            log.info("dataset %s: candidate %s scored %.5f", bundle.name, candidate, score)
            if score > best_score:
                best_id, best_score = candidate, score
        assert best_id is not None
        selections[bundle.name] = best_id
    return selections
