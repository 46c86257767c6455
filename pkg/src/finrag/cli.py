"""Command-line entry points: retrieve, generate, ablate, evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
error.  All paths in the config file resolve relative to the file; paths
given as flags resolve relative to the working directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from finrag.config import RunConfig
from finrag.data import load_qrels, load_run, write_run
from finrag.errors import ConfigError, FinragError
from finrag.evaluation import (
    FULL_MODE_GRID,
    cells_to_json,
    evaluate_run,
    render_ablation_table,
    report_to_json,
    run_ablation,
)
from finrag.generation import GenerationResult, generate, write_answers
from finrag.pre_retrieval import CorpusMode, QueryMode, expand_queries, process_corpus
from finrag.reranking import (
    CascadeConfig,
    RankedList,
    ScoredDoc,
    rankings_to_run,
    route,
    run_cascade,
)
from finrag.tokens import get_counter

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finrag", description="Finance RAG pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, config_required: bool = True):
        p.add_argument("--config", required=config_required, help="run config YAML")
        p.add_argument("--query-mode", choices=[m.value for m in QueryMode], default=None)
        p.add_argument("--corpus-mode", choices=[m.value for m in CorpusMode], default=None)
        p.add_argument("--k1", type=int, default=None)
        p.add_argument("--k2", type=int, default=None)
        p.add_argument("--budget", type=int, default=None, help="token budget override")
        p.add_argument("--backend", default=None, help="stage-2 scoring backend id override")
        p.add_argument("--no-cache", action="store_true")
        p.add_argument("--output", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=None)

    p_retrieve = sub.add_parser("retrieve", help="run pre-retrieval + cascade, write a run file")
    add_common(p_retrieve)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_generate = sub.add_parser("generate", help="answer queries from a run file")
    add_common(p_generate)
    p_generate.add_argument("--run", required=True, help="run file from the retrieve step")
    p_generate.set_defaults(func=cmd_generate)

    p_ablate = sub.add_parser("ablate", help="run the pre-retrieval ablation matrix")
    add_common(p_ablate)
    p_ablate.add_argument(
        "--modes",
        default="full",
        help="'full' or comma-separated query_mode:corpus_mode pairs",
    )
    p_ablate.set_defaults(func=cmd_ablate)

    p_eval = sub.add_parser("evaluate", help="score a run file against qrels")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--qrels", required=True)
    p_eval.add_argument("--k", type=int, default=10)
    p_eval.add_argument("--include-unjudged", action="store_true")
    p_eval.add_argument("--output", default=None)
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config)
    if args.query_mode is not None:
        config.query_mode = QueryMode(args.query_mode)
    if args.corpus_mode is not None:
        config.corpus_mode = CorpusMode(args.corpus_mode)
    if args.output is not None:
        config.output_dir = str(Path(args.output).resolve())
    if args.no_cache:
        config.use_cache = False
    if args.threads is not None:
        config.threads = args.threads
    if args.budget is not None:
        config.budget = type(config.budget)(limit=args.budget, tokenizer_id=config.budget.tokenizer_id)
    return config


def _cascade_config(config: RunConfig, args) -> CascadeConfig:
    cfg = route(config.dataset_name, config.routing)
    return CascadeConfig(
        stage1_backend=cfg.stage1_backend,
        stage2_backend=args.backend if args.backend is not None else cfg.stage2_backend,
        k1=args.k1 if args.k1 is not None else cfg.k1,
        k2=args.k2 if args.k2 is not None else cfg.k2,
    )


def _output_dir(config: RunConfig) -> Path:
    out = config._resolve(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _needs_chat(config: RunConfig) -> bool:
    return config.query_mode is not QueryMode.ORIGINAL or config.corpus_mode is CorpusMode.SUMMARY


def _chat_backend(config: RunConfig, required: bool):
    backend = config.build_chat_backend()
    if backend is None and required:
        raise ConfigError("this run needs a chat backend; add a 'chat' section to the config")
    return backend


def cmd_retrieve(args) -> int:
    config = _load_config(args)
    config.validate_paths()
    cascade_cfg = _cascade_config(config, args)
    bundle = config.load_bundle()
    chat_backend = _chat_backend(config, required=_needs_chat(config))
    registry = config.build_scoring_registry(bundle.qrels)

    models = config.chat
    expanded = expand_queries(
        bundle.queries,
        config.query_mode,
        chat_backend,
        models.expansion_model if models else "gpt-4o-mini",
        threads=config.threads,
    )
    processed = process_corpus(
        bundle.corpus,
        config.corpus_mode,
        chat_backend,
        models.summary_model if models else "gpt-4o",
        floor_tokens=config.summary_floor_tokens,
        threads=config.threads,
    )
    rankings = run_cascade(expanded, processed, cascade_cfg, registry, threads=config.threads)
    run = rankings_to_run(rankings)

    out = _output_dir(config)
    run_path = out / "run.tsv"
    write_run(run, run_path)
    print(f"wrote {run_path} ({len(run.rows)} rows, {len(rankings)} queries)")

    if bundle.qrels is None:
        print("no qrels supplied; skipping evaluation")
        return 0
    report = evaluate_run(run, bundle.qrels, k=10)
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"mean NDCG@{report.k} = {report.mean:.5f} over {report.queries_evaluated} queries")
    print(f"wrote {metrics_path}")
    return 0


def cmd_generate(args) -> int:
    config = _load_config(args)
    config.validate_paths()
    run_path = Path(args.run)
    if not run_path.exists():
        raise ConfigError(f"run file does not exist: {run_path}")
    run = load_run(run_path)
    bundle = config.load_bundle()
    chat_backend = _chat_backend(config, required=True)

    models = config.chat
    expanded = expand_queries(
        bundle.queries,
        config.query_mode,
        chat_backend,
        models.expansion_model if models else "gpt-4o-mini",
        threads=config.threads,
    )
    # Generation always reads the as-is document text; summarized or
    # table-only corpora are retrieval surrogates, not answer sources.
    processed = process_corpus(bundle.corpus, CorpusMode.ORIGINAL)
    lookup = {d.doc_id: d for d in processed}
    counter = get_counter(config.budget.tokenizer_id)

    results: list[GenerationResult | dict] = []
    for query in expanded:
        rows = run.rows_for(query.query_id)
        if not rows:
            log.warning("query '%s' missing from run file", query.query_id)
            results.append({"query_id": query.query_id, "error": "no rows in run file"})
            continue
        ranked = RankedList.from_scores(
            query.query_id, [ScoredDoc(doc_id=r.doc_id, score=r.score) for r in rows]
        )
        try:
            results.append(
                generate(
                    query,
                    ranked,
                    lookup,
                    config.budget,
                    chat_backend,
                    counter=counter,
                    model=models.generation_model if models else "gpt-4o",
                )
            )
        except FinragError as e:
            log.warning("generation failed for query '%s': %s", query.query_id, e)
            results.append({"query_id": query.query_id, "error": str(e)})

    out = _output_dir(config)
    answers_path = out / "answers.jsonl"
    write_answers(results, answers_path)
    generated = sum(isinstance(r, GenerationResult) for r in results)
    print(f"wrote {answers_path} ({generated} answered, {len(results) - generated} failed)")
    return 0


def _parse_modes(spec: str) -> list[tuple[QueryMode, CorpusMode]]:
    if spec == "full":
        return list(FULL_MODE_GRID)
    pairs: list[tuple[QueryMode, CorpusMode]] = []
    for part in spec.split(","):
        part = part.strip()
        if ":" not in part:
            raise ConfigError(f"mode pair '{part}' must look like query_mode:corpus_mode")
        q, c = part.split(":", 1)
        try:
            pairs.append((QueryMode(q), CorpusMode(c)))
        except ValueError:
            raise ConfigError(
                f"invalid mode pair '{part}'; query modes: {[m.value for m in QueryMode]}, "
                f"corpus modes: {[m.value for m in CorpusMode]}"
            ) from None
    return pairs


def cmd_ablate(args) -> int:
    config = _load_config(args)
    config.validate_paths(need_qrels=True)
    modes = _parse_modes(args.modes)
    cascade_cfg = _cascade_config(config, args)
    bundle = config.load_bundle()
    chat_backend = config.build_chat_backend()
    registry = config.build_scoring_registry(bundle.qrels)

    models = config.chat
    cells = run_ablation(
        bundle,
        modes,
        registry=registry,
        config=cascade_cfg,
        chat_backend=chat_backend,
        k=10,
        expansion_model=models.expansion_model if models else "gpt-4o-mini",
        summary_model=models.summary_model if models else "gpt-4o",
        summary_floor_tokens=config.summary_floor_tokens,
        threads=config.threads,
    )
    print(render_ablation_table(cells, k=10))
    out = _output_dir(config)
    matrix_path = out / "ablation.json"
    matrix_path.write_text(json.dumps(cells_to_json(cells), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {matrix_path}")
    return 0 if any(c.error is None for c in cells) else 1


def cmd_evaluate(args) -> int:
    run_path = Path(args.run)
    qrels_path = Path(args.qrels)
    if not run_path.exists():
        raise ConfigError(f"run file does not exist: {run_path}")
    if not qrels_path.exists():
        raise ConfigError(f"qrels file does not exist: {qrels_path}")
    run = load_run(run_path)
    qrels = load_qrels(qrels_path)
    report = evaluate_run(run, qrels, k=args.k, include_unjudged=args.include_unjudged)
    for qid in sorted(report.per_query):
        print(f"{qid}\tndcg@{report.k}\t{report.per_query[qid]:.5f}")
    print(f"mean NDCG@{report.k} = {report.mean:.5f} over {report.queries_evaluated} queries")
    if report.flagged:
        print(f"flagged (no positive judgments): {', '.join(sorted(report.flagged))}")
    if args.output is not None:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.json"
        metrics_path.write_text(
            json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"wrote {metrics_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FinragError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
