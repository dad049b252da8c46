"""End-to-end tests of the calltopics command line on the synthetic corpus"""

import json
from pathlib import Path

import pytest

from cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from ontology import save


def run(capsys, logs_dir, *argv):
    code = main(["--logs-dir", str(logs_dir), *argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_error(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth + build once; every analytics command reads from here"""
    root = tmp_path_factory.mktemp("cli")
    logs = root / "logs"
    assert main(["--logs-dir", str(logs), "--out-dir", str(root / "synth"), "synth"]) == EXIT_OK
    config = root / "synth" / "run_config.json"
    assert main(["--logs-dir", str(logs), "--config", str(config), "--out-dir", str(root / "a"), "build"]) == EXIT_OK
    return {"root": root, "logs": logs, "config": config, "out": root / "a"}


def analytics_args(workspace, *argv):
    return ["--config", str(workspace["config"]), "--out-dir", str(workspace["out"]), *argv]


class TestSynthAndBuild:
    def test_synth_manifest(self, capsys, tmp_path):
        code, out, _ = run(capsys, tmp_path / "logs", "--out-dir", str(tmp_path), "synth")
        manifest = json.loads(out)
        assert code == EXIT_OK
        assert manifest["seed"] == 7
        assert manifest["documents"] == 60
        assert Path(manifest["run_config"]).is_file()
        run_config = json.loads(Path(manifest["run_config"]).read_text(encoding="utf-8"))
        assert run_config["pipeline"]["candidate_k"] == 100

    def test_build_outputs(self, workspace):
        out = workspace["out"]
        for name in ("ontology.json", "enrichments.jsonl", "run_report.json"):
            assert (out / name).is_file()
        report = json.loads((out / "run_report.json").read_text(encoding="utf-8"))
        assert report["paragraphs_skipped"] == 0
        assert report["topics_created"] == 5

    def test_rebuild_is_byte_identical(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], "--config", str(workspace["config"]), "--out-dir", str(workspace["root"] / "b"), "build")
        assert code == EXIT_OK
        assert json.loads(out)["topics_created"] == 5
        for name in ("ontology.json", "enrichments.jsonl"):
            assert (workspace["root"] / "b" / name).read_bytes() == (workspace["out"] / name).read_bytes()


class TestAnalyticsCommands:
    def test_trends(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], *analytics_args(workspace, "trends", "--company", "TSLA", "--series", "Supply Chain"))
        report = json.loads(out)
        assert code == EXIT_OK
        assert "Supply Chain" in [r["topic"] for r in report["trending_down"]]
        assert "Cybertruck" not in [r["topic"] for r in report["trending_up"]]
        assert (workspace["out"] / "trends.json").is_file()
        assert (workspace["out"] / "trend_series.csv").is_file()

    def test_trends_unknown_company(self, capsys, workspace):
        code, _, err = run(capsys, workspace["logs"], *analytics_args(workspace, "trends", "--company", "ACME"))
        assert code == EXIT_RUNTIME
        assert last_error(err)["error"] == "NotFoundError"

    def test_compare_with_anchor(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], *analytics_args(workspace, "--format", "csv", "compare", "--anchor", "TSLA", "--top-n", "5"))
        report = json.loads(out)
        assert code == EXIT_OK
        assert report["matrices"]["all"]["companies"] == ["AMD", "F", "GM", "INTC", "NVDA", "TSLA"]
        assert report["common"]["anchor"] == "TSLA"
        assert (workspace["out"] / "compare.csv").is_file()

    def test_compare_by_sector(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], *analytics_args(workspace, "compare", "--sector"))
        assert code == EXIT_OK
        assert sorted(json.loads(out)["matrices"]) == ["Electric Vehicles", "Semiconductors"]

    def test_emerging(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], *analytics_args(workspace, "emerging", "--split", "2023-07-21"))
        assert code == EXIT_OK
        assert [t["topic"] for t in json.loads(out)["topics"]] == ["High Bandwidth Memory"]

    def test_coherence(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], *analytics_args(workspace, "coherence", "--num-parents", "5"))
        assert code == EXIT_OK
        assert len(json.loads(out)["rows"]) == 5

    def test_timeline(self, capsys, workspace):
        code, out, _ = run(capsys, workspace["logs"], *analytics_args(workspace, "timeline"))
        points = json.loads(out)["points"]
        assert code == EXIT_OK
        assert sum(p["new_topics"] for p in points) == 5

    def test_stats_on_small_tree(self, capsys, tmp_path, three_node_tree):
        path = save(three_node_tree, tmp_path / "tree.json")
        code, out, _ = run(capsys, tmp_path / "logs", "--out-dir", str(tmp_path), "stats", "--ontology", str(path))
        stats = json.loads(out)["ontology"]
        assert code == EXIT_OK
        assert stats["total_nodes"] == 3
        assert stats["num_leaf_nodes"] == 2

    def test_schema(self, capsys, tmp_path):
        code, out, _ = run(capsys, tmp_path, "schema", "--name", "trends")
        assert code == EXIT_OK
        assert "trending_down" in json.loads(out)["properties"]


class TestIngest:
    def test_directory(self, capsys, tmp_path):
        source = tmp_path / "calls"
        source.mkdir()
        (source / "acme.txt").write_text("Welcome.\n\nSupply chain costs eased.", encoding="utf-8")
        (source / "metadata.json").write_text(json.dumps({
            "acme.txt": {"ticker": "ACME", "sector": "Tech", "date": "2023-04-20", "quarter": "2023Q1"},
        }), encoding="utf-8")
        code, out, _ = run(capsys, tmp_path / "logs", "--out-dir", str(tmp_path / "out"), "ingest", str(source))
        assert code == EXIT_OK
        assert json.loads(out)["corpus"]["total_paragraphs"] == 2
        assert (tmp_path / "out" / "corpus.jsonl").is_file()


class TestErrors:
    def test_unknown_command(self, capsys, tmp_path):
        code, _, err = run(capsys, tmp_path, "frobnicate")
        assert code == EXIT_USAGE
        assert last_error(err)["error"] == "ConfigError"

    def test_missing_config(self, capsys, tmp_path):
        code, _, err = run(capsys, tmp_path, "--config", str(tmp_path / "nope.toml"), "timeline")
        assert code == EXIT_USAGE
        assert "Config file not found" in last_error(err)["message"]

    def test_bad_config_value(self, capsys, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"pipeline": {"match_threshold": 150}}), encoding="utf-8")
        code, _, _ = run(capsys, tmp_path, "--config", str(config), "build")
        assert code == EXIT_USAGE

    def test_stats_needs_an_input(self, capsys, tmp_path):
        code, _, _ = run(capsys, tmp_path, "--out-dir", str(tmp_path), "stats")
        assert code == EXIT_USAGE

    def test_bad_date(self, capsys, tmp_path):
        code, _, _ = run(capsys, tmp_path, "emerging", "--split", "yesterday")
        assert code == EXIT_USAGE

    def test_missing_ontology(self, capsys, tmp_path):
        code, _, err = run(capsys, tmp_path, "--out-dir", str(tmp_path), "timeline", "--ontology", str(tmp_path / "none.json"))
        assert code == EXIT_RUNTIME
        assert last_error(err)["error"] == "OntologyLoadError"
