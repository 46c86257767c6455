"""Shared fixture builders: synthetic datasets, scripted chat backends."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from finrag.data import Document, Qrels, Query
from finrag.llm import ScriptedChatBackend
from finrag.pre_retrieval import CorpusMode, ProcessedDocument


def proc(doc_id: str, text: str, mode: CorpusMode = CorpusMode.ORIGINAL) -> ProcessedDocument:
    return ProcessedDocument(doc_id=doc_id, mode=mode, retrieval_text=text)


def synth_dataset(n_queries: int = 10, n_docs: int = 50) -> tuple[list[Query], list[Document], Qrels]:
    """A dataset where query i is answered by doc i (grade 2) and doc
    n_queries+i (grade 1); remaining docs are filler."""
    queries = [Query(id=f"q{i:02d}", text=f"What is metric {i} of company C{i}?") for i in range(n_queries)]
    docs = []
    for j in range(n_docs):
        docs.append(Document(id=f"d{j:02d}", text=f"Company C{j % n_queries} reported metric {j} at {j * 10} in FY2023."))
    judgments = {}
    for i in range(n_queries):
        judgments[f"q{i:02d}"] = {f"d{i:02d}": 2, f"d{n_queries + i:02d}": 1}
    return queries, docs, Qrels(judgments=judgments)


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path


def write_dataset_files(
    dirpath: Path, queries: list[Query], docs: list[Document], qrels: Qrels | None
) -> dict[str, Path]:
    dirpath.mkdir(parents=True, exist_ok=True)
    paths = {
        "queries": write_jsonl(dirpath / "queries.jsonl", [{"_id": q.id, "text": q.text} for q in queries]),
        "corpus": write_jsonl(
            dirpath / "corpus.jsonl",
            [
                {
                    "_id": d.id,
                    "text": d.text,
                    **({"title": d.title} if d.title else {}),
                    **(
                        {"tables": [{"caption": t.caption, "cells": [list(c) for c in t.cells]} for t in d.tables]}
                        if d.tables
                        else {}
                    ),
                }
                for d in docs
            ],
        ),
    }
    if qrels is not None:
        lines = [
            f"{qid}\t{did}\t{grade}"
            for qid, per_doc in sorted(qrels.judgments.items())
            for did, grade in sorted(per_doc.items())
        ]
        qrels_path = dirpath / "qrels.tsv"
        qrels_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths["qrels"] = qrels_path
    return paths


DEFAULT_CHAT_ENTRIES = [
    ("pattern", r"Extract the key financial search terms", "revenue; FY2023; growth"),
    ("pattern", r"Rewrite the question", "Expanded form of the question"),
    ("pattern", r"Write a short passage", "The company reported revenue of $10M in FY2023."),
    ("pattern", r"Condense the document", "SUM: condensed document"),
    ("pattern", r"Two partial answers", "Fused: $10M"),
    ("pattern", r"Question:", "$10M"),
]


@pytest.fixture
def chat_mock() -> ScriptedChatBackend:
    return ScriptedChatBackend(list(DEFAULT_CHAT_ENTRIES))


def write_chat_script(path: Path) -> Path:
    entries = [{"pattern": p, "response": r} for _, p, r in DEFAULT_CHAT_ENTRIES]
    path.write_text(json.dumps({"entries": entries}), encoding="utf-8")
    return path


def write_config(
    dirpath: Path,
    paths: dict[str, Path],
    *,
    dataset_name: str = "demo",
    scoring: dict | None = None,
    routing: dict | None = None,
    chat_script: Path | None = None,
    **extra,
) -> Path:
    config: dict = {
        "dataset_name": dataset_name,
        "queries": str(paths["queries"]),
        "corpus": str(paths["corpus"]),
        "scoring": scoring or {"bm25": {"kind": "bm25"}},
        "routing": routing or {"default": {"stage1": "bm25", "stage2": "bm25", "k1": 200, "k2": 10}},
        "output_dir": str(dirpath / "out"),
    }
    if "qrels" in paths:
        config["qrels"] = str(paths["qrels"])
    if chat_script is not None:
        config["chat"] = {"kind": "scripted", "script": str(chat_script)}
    config.update(extra)
    config_path = dirpath / "config.yaml"
    config_path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return config_path
