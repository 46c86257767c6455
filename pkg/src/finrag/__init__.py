"""Finance RAG pipeline: pre-retrieval transforms, two-stage rerank cascade,
budgeted generation with split-and-fuse, and NDCG@10 evaluation."""

__version__ = "0.1.0"

from finrag.data import DatasetBundle, Document, Qrels, Query, RunFile, RunRow, TableBlock
from finrag.errors import FinragError
from finrag.evaluation import MetricReport, evaluate_run, ndcg_at_k
from finrag.generation import GenerationResult, TokenBudget, generate
from finrag.pre_retrieval import CorpusMode, ExpandedQuery, ProcessedDocument, QueryMode
from finrag.reranking import CascadeConfig, DatasetRouting, RankedList, ScoredDoc, cascade

__all__ = [
    "CascadeConfig",
    "CorpusMode",
    "DatasetBundle",
    "DatasetRouting",
    "Document",
    "ExpandedQuery",
    "FinragError",
    "GenerationResult",
    "MetricReport",
    "ProcessedDocument",
    "Qrels",
    "Query",
    "QueryMode",
    "RankedList",
    "RunFile",
    "RunRow",
    "ScoredDoc",
    "TableBlock",
    "TokenBudget",
    "cascade",
    "evaluate_run",
    "generate",
    "ndcg_at_k",
    "__version__",
]
