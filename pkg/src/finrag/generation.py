"""Budgeted answer generation: direct call or split-and-fuse.

Up to the top 20 retrieved documents feed the model.  If the assembled
context fits the token budget it goes through in one call; otherwise
ranks 1-10 and 11-20 are answered separately and the partial answers
merged with a fusion call.  A half that still exceeds the budget is
truncated from the tail, never dropping its top document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from finrag.errors import FinragError, GenerationError, ValidationError
from finrag.llm import ChatBackend, ChatRequest, chat
from finrag.pre_retrieval import ExpandedQuery, ProcessedDocument
from finrag.prompts import load_prompt
from finrag.reranking import RankedList
from finrag.tokens import ApproxTokenCounter, TokenCounter


MAX_CONTEXT_DOCS = 20
SPLIT_POINT = 10
DEFAULT_BUDGET_TOKENS = 32768


@dataclass(frozen=True)
class TokenBudget:
    limit: int = DEFAULT_BUDGET_TOKENS
    tokenizer_id: str = "approx"

    def __post_init__(self):
        if self.limit <= 0:
            raise ValidationError(f"token budget must be positive, got {self.limit}")


@dataclass(frozen=True)
class GenerationResult:
    query_id: str
    answer: str
    fused: bool
    input_tokens: int
    context_doc_ids: tuple[str, ...]
    sub_answers: tuple[str, str] | None = None

    def __post_init__(self):
        if self.fused != (self.sub_answers is not None):
            raise ValidationError("fused is true exactly when sub_answers are present")


def count_tokens(text: str, tokenizer: TokenCounter) -> int:
    return tokenizer.count(text)


def answer_prompt(query: ExpandedQuery) -> str:
    """The versioned system prompt demanding concise, exact-figure answers."""
    return load_prompt("answer")


def _assemble(query: ExpandedQuery, blocks: Sequence[tuple[int, str]], docs: Mapping[str, ProcessedDocument]) -> str:
    parts = []
    for rank, doc_id in blocks:
        if doc_id not in docs:
            raise ValidationError(f"document '{doc_id}' missing from lookup")
        parts.append(f"[Document {rank}] {doc_id}\n{docs[doc_id].retrieval_text}")
    parts.append(f"Question:\n{query.combined_text}")
    return "\n\n".join(parts)


def assemble_context(
    query: ExpandedQuery,
    ranked: RankedList,
    docs: Mapping[str, ProcessedDocument],
    start_rank: int,
    end_rank: int,
) -> str:
    """Serialize ranks [start_rank, end_rank] plus the query block.

    Document blocks are numbered by their rank and appear in rank order;
    an empty interval yields the query block alone.
    """
    if start_rank < 1:
        raise ValidationError(f"start_rank must be >= 1, got {start_rank}")
    if end_rank > len(ranked.entries):
        raise ValidationError(f"end_rank {end_rank} exceeds ranking length {len(ranked.entries)}")
    blocks = [(rank, ranked.entries[rank - 1].doc_id) for rank in range(start_rank, end_rank + 1)]
    return _assemble(query, blocks, docs)


def fuse(r1: str, r2: str, query: ExpandedQuery, backend: ChatBackend, model: str = "gpt-4o") -> str:
    """Merge two partial answers with a fusion call.

    If exactly one is non-empty it is returned as-is without a model
    call; both empty is an error.
    """
    if not r1.strip() and not r2.strip():
        raise ValidationError(f"both sub-answers for query '{query.query_id}' are empty")
    if not r1.strip():
        return r2
    if not r2.strip():
        return r1
    prompt = load_prompt("fusion").format(query=query.original, answer_1=r1, answer_2=r2)
    request = ChatRequest(user_prompt=prompt, system_prompt=answer_prompt(query), model_name=model)
    return chat(backend, request).text


def _truncate_to_budget(
    query: ExpandedQuery,
    blocks: list[tuple[int, str]],
    docs: Mapping[str, ProcessedDocument],
    limit: int,
    counter: TokenCounter,
) -> tuple[str, list[tuple[int, str]]]:
    # Drop lowest-ranked docs until the context fits; keep at least one.
    kept = list(blocks)
    context = _assemble(query, kept, docs)
    while len(kept) > 1 and counter.count(context) > limit:
        kept.pop()
        context = _assemble(query, kept, docs)
    return context, kept


def generate(
    query: ExpandedQuery,
    ranked: RankedList,
    docs: Mapping[str, ProcessedDocument],
    budget: TokenBudget,
    backend: ChatBackend,
    *,
    counter: TokenCounter | None = None,
    model: str = "gpt-4o",
    max_answer_tokens: int = 1024,
) -> GenerationResult:
    """Answer one query from its ranked documents under the token budget."""
    if not ranked.entries:
        raise ValidationError(f"query '{query.query_id}' has no ranked documents")
    counter = counter or ApproxTokenCounter()
    n = min(MAX_CONTEXT_DOCS, len(ranked.entries))
    blocks = [(rank, ranked.entries[rank - 1].doc_id) for rank in range(1, n + 1)]
    full_context = _assemble(query, blocks, docs)
    total_tokens = counter.count(full_context)
    system = answer_prompt(query)

    def call(stage: str, context: str) -> str:
        request = ChatRequest(
            user_prompt=context, system_prompt=system, model_name=model, max_output_tokens=max_answer_tokens
        )
        try:
            return chat(backend, request).text
        except FinragError as e:
            raise GenerationError(stage, f"query '{query.query_id}': {e}") from e

    if total_tokens <= budget.limit:
        answer = call("direct", full_context)
        return GenerationResult(
            query_id=query.query_id,
            answer=answer,
            fused=False,
            input_tokens=total_tokens,
            context_doc_ids=tuple(doc_id for _, doc_id in blocks),
        )

    half1 = blocks[:SPLIT_POINT]
    half2 = blocks[SPLIT_POINT:]
    context1, kept1 = _truncate_to_budget(query, half1, docs, budget.limit, counter)
    r1 = call("half-1", context1)
    if half2:
        context2, kept2 = _truncate_to_budget(query, half2, docs, budget.limit, counter)
        r2 = call("half-2", context2)
    else:
        kept2 = []
        r2 = ""
    try:
        answer = fuse(r1, r2, query, backend, model=model)
    except FinragError as e:
        if isinstance(e, GenerationError):
            raise
        raise GenerationError("fusion", f"query '{query.query_id}': {e}") from e
    return GenerationResult(
        query_id=query.query_id,
        answer=answer,
        fused=True,
        input_tokens=total_tokens,
        context_doc_ids=tuple(doc_id for _, doc_id in kept1 + kept2),
        sub_answers=(r1, r2),
    )


def write_answers(results: Sequence[GenerationResult | dict], path: str | Path) -> None:
    """Write one JSON object per query: answers or per-query failures."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for result in results:
            if isinstance(result, GenerationResult):
                row = {
                    "query_id": result.query_id,
                    "answer": result.answer,
                    "fused": result.fused,
                    "input_tokens": result.input_tokens,
                    "context_doc_ids": list(result.context_doc_ids),
                }
            else:
                row = result
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
