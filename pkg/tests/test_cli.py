import json

import pytest

from finrag.cli import main
from finrag.config import RunConfig
from finrag.data import RunFile, RunRow, write_run
from tests.conftest import synth_dataset, write_chat_script, write_config, write_dataset_files


@pytest.fixture
def oracle_workspace(tmp_path):
    """Fixture dataset + config with oracle scoring for both stages."""
    queries, docs, qrels = synth_dataset(n_queries=4, n_docs=16)
    paths = write_dataset_files(tmp_path / "data", queries, docs, qrels)
    chat_script = write_chat_script(tmp_path / "chat_script.json")
    config = write_config(
        tmp_path,
        paths,
        scoring={"oracle": {"kind": "oracle"}, "bm25": {"kind": "bm25"}},
        routing={"default": {"stage1": "oracle", "stage2": "oracle", "k1": 200, "k2": 10}},
        chat_script=chat_script,
    )
    return tmp_path, config


def test_retrieve_perfect_oracle(oracle_workspace, capsys):
    tmp_path, config = oracle_workspace
    assert main(["retrieve", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert "mean NDCG@10 = 1.00000" in out
    run_path = tmp_path / "out" / "run.tsv"
    assert run_path.exists()
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert metrics["mean"] == 1.0
    assert metrics["queries_evaluated"] == 4


def test_retrieve_missing_corpus_exits_2(tmp_path, capsys):
    queries, docs, qrels = synth_dataset(n_queries=2, n_docs=4)
    paths = write_dataset_files(tmp_path / "data", queries, docs, qrels)
    paths["corpus"].unlink()
    config = write_config(tmp_path, paths)
    assert main(["retrieve", "--config", str(config)]) == 2
    assert "corpus" in capsys.readouterr().err


def test_retrieve_without_qrels_skips_metrics(tmp_path, capsys):
    queries, docs, _ = synth_dataset(n_queries=2, n_docs=4)
    paths = write_dataset_files(tmp_path / "data", queries, docs, None)
    config = write_config(tmp_path, paths)
    assert main(["retrieve", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert "skipping evaluation" in out
    assert (tmp_path / "out" / "run.tsv").exists()
    assert not (tmp_path / "out" / "metrics.json").exists()


def test_retrieve_is_deterministic_across_runs_and_threads(oracle_workspace):
    tmp_path, config = oracle_workspace
    outputs = []
    for threads in ("1", "8", "1", "8"):
        out_dir = tmp_path / f"out_{threads}_{len(outputs)}"
        assert main(["retrieve", "--config", str(config), "--threads", threads, "--output", str(out_dir)]) == 0
        outputs.append((out_dir / "run.tsv").read_bytes())
    assert len(set(outputs)) == 1


def test_generate_answers(oracle_workspace):
    tmp_path, config = oracle_workspace
    assert main(["retrieve", "--config", str(config)]) == 0
    run_path = tmp_path / "out" / "run.tsv"
    assert main(["generate", "--config", str(config), "--run", str(run_path)]) == 0
    rows = [
        json.loads(line)
        for line in (tmp_path / "out" / "answers.jsonl").read_text(encoding="utf-8").splitlines()
    ]
    assert len(rows) == 4
    for row in rows:
        assert set(row) == {"query_id", "answer", "fused", "input_tokens", "context_doc_ids"}
        assert row["fused"] is False  # small fixtures fit the default budget


def test_generate_missing_query_recorded_as_failure(oracle_workspace):
    tmp_path, config = oracle_workspace
    partial_run = RunFile(rows=[RunRow("q00", "d00", 1, 2.0)])
    run_path = tmp_path / "partial_run.tsv"
    write_run(partial_run, run_path)
    assert main(["generate", "--config", str(config), "--run", str(run_path)]) == 0
    rows = [
        json.loads(line)
        for line in (tmp_path / "out" / "answers.jsonl").read_text(encoding="utf-8").splitlines()
    ]
    failures = [r for r in rows if "error" in r]
    assert len(failures) == 3
    assert all(r["error"] == "no rows in run file" for r in failures)


def test_generate_tiny_budget_forces_split(oracle_workspace):
    tmp_path, config = oracle_workspace
    assert main(["retrieve", "--config", str(config)]) == 0
    run_path = tmp_path / "out" / "run.tsv"
    assert main(["generate", "--config", str(config), "--run", str(run_path), "--budget", "10"]) == 0
    rows = [
        json.loads(line)
        for line in (tmp_path / "out" / "answers.jsonl").read_text(encoding="utf-8").splitlines()
    ]
    assert all(r["fused"] is True for r in rows if "answer" in r)


def test_ablate_single_cell(oracle_workspace, capsys):
    tmp_path, config = oracle_workspace
    assert main(["ablate", "--config", str(config), "--modes", "original:original"]) == 0
    cells = json.loads((tmp_path / "out" / "ablation.json").read_text())
    assert len(cells) == 1
    assert cells[0]["ndcg"] == 1.0


def test_ablate_full_grid(oracle_workspace, capsys):
    tmp_path, config = oracle_workspace
    assert main(["ablate", "--config", str(config)]) == 0
    cells = json.loads((tmp_path / "out" / "ablation.json").read_text())
    assert len(cells) == 12
    assert len({(c["query_mode"], c["corpus_mode"]) for c in cells}) == 12
    table = capsys.readouterr().out
    assert "NDCG@10" in table


def test_ablate_invalid_mode_exits_2(oracle_workspace, capsys):
    _, config = oracle_workspace
    assert main(["ablate", "--config", str(config), "--modes", "bogus:original"]) == 2
    err = capsys.readouterr().err
    assert "original" in err and "plus_keywords" in err


def test_evaluate_command(oracle_workspace, capsys):
    tmp_path, config = oracle_workspace
    assert main(["retrieve", "--config", str(config)]) == 0
    code = main(
        [
            "evaluate",
            "--run",
            str(tmp_path / "out" / "run.tsv"),
            "--qrels",
            str(tmp_path / "data" / "qrels.tsv"),
        ]
    )
    assert code == 0
    assert "mean NDCG@10 = 1.00000" in capsys.readouterr().out


def test_evaluate_disjoint_run_exits_1(tmp_path, capsys):
    queries, docs, qrels = synth_dataset(n_queries=2, n_docs=4)
    data_paths = write_dataset_files(tmp_path / "data", queries, docs, qrels)
    run_path = tmp_path / "run.tsv"
    write_run(RunFile(rows=[RunRow("zz", "d00", 1, 1.0)]), run_path)
    assert main(["evaluate", "--run", str(run_path), "--qrels", str(data_paths["qrels"])]) == 1
    assert "no overlap" in capsys.readouterr().err


def test_query_mode_override_uses_chat_mock(oracle_workspace):
    tmp_path, config = oracle_workspace
    out_dir = tmp_path / "expanded_out"
    code = main(
        ["retrieve", "--config", str(config), "--query-mode", "plus_keywords", "--output", str(out_dir)]
    )
    assert code == 0
    assert (out_dir / "run.tsv").exists()


def test_backend_and_k_overrides(oracle_workspace):
    tmp_path, config = oracle_workspace
    out_dir = tmp_path / "bm25_out"
    code = main(
        ["retrieve", "--config", str(config), "--backend", "bm25", "--k1", "8", "--k2", "3", "--output", str(out_dir)]
    )
    assert code == 0
    lines = (out_dir / "run.tsv").read_text().splitlines()
    per_query = {}
    for line in lines:
        qid = line.split("\t")[0]
        per_query[qid] = per_query.get(qid, 0) + 1
    assert all(count == 3 for count in per_query.values())


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        main(["retrieve"])  # missing --config
    assert excinfo.value.code == 2


def test_bad_routing_k_values_exit_2(tmp_path, capsys):
    queries, docs, qrels = synth_dataset(n_queries=2, n_docs=4)
    paths = write_dataset_files(tmp_path / "data", queries, docs, qrels)
    config = write_config(
        tmp_path, paths, routing={"default": {"stage1": "bm25", "stage2": "bm25", "k1": 5, "k2": 10}}
    )
    assert main(["retrieve", "--config", str(config)]) == 2
    assert "k2" in capsys.readouterr().err


def test_generate_is_byte_deterministic(oracle_workspace):
    tmp_path, config = oracle_workspace
    assert main(["retrieve", "--config", str(config)]) == 0
    run_path = tmp_path / "out" / "run.tsv"
    outputs = []
    for i in range(2):
        out_dir = tmp_path / f"gen{i}"
        assert main(["generate", "--config", str(config), "--run", str(run_path), "--output", str(out_dir)]) == 0
        outputs.append((out_dir / "answers.jsonl").read_bytes())
    assert outputs[0] == outputs[1]


def test_config_round_trips(tmp_path):
    queries, docs, qrels = synth_dataset(n_queries=2, n_docs=4)
    paths = write_dataset_files(tmp_path / "data", queries, docs, qrels)
    chat_script = write_chat_script(tmp_path / "chat.json")
    config_path = write_config(tmp_path, paths, chat_script=chat_script, threads=4)
    config = RunConfig.from_file(config_path)
    rebuilt = RunConfig.from_dict(config.to_dict(), base_dir=config.base_dir)
    assert rebuilt.to_dict() == config.to_dict()
