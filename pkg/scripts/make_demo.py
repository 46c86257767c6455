"""Build a self-contained offline demo workspace.

Writes a small finance-flavored dataset, a scripted chat mock, and a run
config into the target directory, then prints the commands to try.

Usage: python scripts/make_demo.py [target_dir]
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import yaml

COMPANIES = ["Acme", "Globex", "Initech", "Umbrella", "Stark", "Wayne", "Hooli", "Vandelay"]
METRICS = ["revenue", "net income", "operating margin", "free cash flow"]


def build_dataset(rng: random.Random):
    queries, docs, qrels_rows = [], [], []
    doc_counter = 0
    for qi, company in enumerate(COMPANIES):
        metric = METRICS[qi % len(METRICS)]
        qid = f"q{qi:02d}"
        queries.append({"_id": qid, "text": f"What was {company}'s {metric} in FY2023?"})

        value = rng.randint(5, 900) * 10
        relevant = {
            "_id": f"d{doc_counter:03d}",
            "title": f"{company} 10-K FY2023",
            "text": f"{company} reported {metric} of ${value}M for fiscal year 2023, up from the prior year.",
            "tables": [
                {
                    "caption": f"{company} selected financials",
                    "cells": [
                        [metric, "FY2023", f"{value}"],
                        [metric, "FY2022", f"{value - rng.randint(10, 80)}"],
                    ],
                }
            ],
        }
        qrels_rows.append((qid, relevant["_id"], 2))
        docs.append(relevant)
        doc_counter += 1

        related = {
            "_id": f"d{doc_counter:03d}",
            "title": f"{company} press release",
            "text": f"{company} commented on {metric} trends during the FY2023 earnings call.",
        }
        qrels_rows.append((qid, related["_id"], 1))
        docs.append(related)
        doc_counter += 1

    for _ in range(24):
        company = rng.choice(COMPANIES)
        docs.append(
            {
                "_id": f"d{doc_counter:03d}",
                "text": f"{company} filed a routine disclosure about board membership and governance.",
            }
        )
        doc_counter += 1
    rng.shuffle(docs)
    return queries, docs, qrels_rows


CHAT_ENTRIES = [
    {"pattern": r"Extract the key financial search terms", "response": "FY2023; fiscal year 2023; 10-K"},
    {"pattern": r"Rewrite the question", "response": "State the requested financial figure for fiscal year 2023."},
    {"pattern": r"Write a short passage", "response": "The company reported the requested figure in its FY2023 10-K."},
    {"pattern": r"Condense the document", "response": "FY2023 filing summary with key figures retained."},
    {"pattern": r"Two partial answers", "response": "Merged figure from both document halves."},
    {"pattern": r"Question:", "response": "The figure requested is stated in the FY2023 filing."},
]


def main() -> int:
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo")
    target.mkdir(parents=True, exist_ok=True)
    rng = random.Random(42)
    queries, docs, qrels_rows = build_dataset(rng)

    with (target / "queries.jsonl").open("w", encoding="utf-8") as f:
        for row in queries:
            f.write(json.dumps(row) + "\n")
    with (target / "corpus.jsonl").open("w", encoding="utf-8") as f:
        for row in docs:
            f.write(json.dumps(row) + "\n")
    with (target / "qrels.tsv").open("w", encoding="utf-8") as f:
        for qid, did, grade in qrels_rows:
            f.write(f"{qid}\t{did}\t{grade}\n")
    (target / "chat_script.json").write_text(json.dumps({"entries": CHAT_ENTRIES}, indent=2), encoding="utf-8")

    config = {
        "dataset_name": "demo",
        "queries": "queries.jsonl",
        "corpus": "corpus.jsonl",
        "qrels": "qrels.tsv",
        "query_mode": "plus_keywords",
        "corpus_mode": "original",
        "output_dir": "out",
        "scoring": {
            "bm25": {"kind": "bm25"},
            "oracle": {"kind": "oracle"},
        },
        "routing": {"default": {"stage1": "bm25", "stage2": "bm25", "k1": 200, "k2": 10}},
        "chat": {"kind": "scripted", "script": "chat_script.json"},
        "budget": {"limit": 32768, "tokenizer": "approx"},
    }
    (target / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")

    print(f"demo workspace written to {target}/")
    print("try:")
    print(f"  finrag retrieve --config {target}/config.yaml")
    print(f"  finrag generate --config {target}/config.yaml --run {target}/out/run.tsv")
    print(f"  finrag ablate   --config {target}/config.yaml")
    print(f"  finrag evaluate --run {target}/out/run.tsv --qrels {target}/qrels.tsv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
