import csv
import json
import socket
import sqlite3

import pytest
from click.testing import CliRunner

from repoaffil.cli import cli
from repoaffil.mockapi import MockGitHubServer, MockInferenceServer, build_corpus
from repoaffil.store import Store

from oracles import oracle_score


@pytest.fixture(scope="module")
def corpus(ucsc):
    return build_corpus([ucsc], n_repos=36, seed=11)


@pytest.fixture(scope="module")
def servers(corpus):
    with MockGitHubServer(corpus) as gh, MockInferenceServer(corpus) as inference:
        yield gh, inference


@pytest.fixture()
def env(servers, tmp_path):
    gh, inference = servers
    return {
        "GITHUB_TOKEN": "test-token",
        "REPOAFFIL_GITHUB_URL": gh.base_url,
        "EMBEDDINGS_BASE_URL": inference.base_url,
        "EMBEDDINGS_MODEL": "mock-embed-1",
        "LLM_BASE_URL": inference.base_url,
        "REPOAFFIL_STORE": str(tmp_path / "store.db"),
    }


def run(args, env, **kwargs):
    return CliRunner().invoke(cli, args, env=env, catch_exceptions=False, **kwargs)


def write_truth_csv(corpus, path, institution="ucsc"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repo_id", "institution_id", "label", "labeler"])
        for repo_id, label in sorted(corpus.truth[institution].items()):
            writer.writerow([repo_id, institution, label, "oracle"])


def discover_and_enrich(env):
    assert run(["discover", "--institution", "ucsc"], env).exit_code == 0
    assert run(["enrich", "--phase", "contributors"], env).exit_code == 0
    assert run(["enrich", "--phase", "orgs"], env).exit_code == 0


def dump_store_sans_timestamps(path):
    conn = sqlite3.connect(path)
    conn.row_factory = sqlite3.Row
    snapshot = {}
    drop = {"fetched_at", "contributors_fetched_at", "org_fetched_at"}
    for table in ("repos", "search_matches", "contributors", "orgs"):
        rows = [
            {k: row[k] for k in row.keys() if k not in drop}
            for row in conn.execute(f"SELECT * FROM {table}")
        ]
        snapshot[table] = sorted(rows, key=lambda r: json.dumps(r, sort_keys=True))
    conn.close()
    return snapshot


class TestDiscover:
    def test_summary_lists_17_queries(self, env, corpus):
        result = run(["discover", "--institution", "ucsc"], env)
        assert result.exit_code == 0
        assert "17 queries" in result.output
        assert "unique repos: 36" in result.output

    def test_missing_token_exits_1_naming_variable(self, env):
        bad = dict(env, GITHUB_TOKEN=None)
        result = CliRunner().invoke(cli, ["discover", "--institution", "ucsc"], env=bad)
        assert result.exit_code == 1
        assert "GITHUB_TOKEN" in result.output

    def test_unknown_institution_exits_1(self, env):
        result = CliRunner().invoke(cli, ["discover", "--institution", "zzz"], env=env)
        assert result.exit_code == 1
        assert "zzz" in result.output

    def test_rerun_is_idempotent(self, env):
        first = run(["discover", "--institution", "ucsc"], env)
        snapshot_a = dump_store_sans_timestamps(env["REPOAFFIL_STORE"])
        second = run(["discover", "--institution", "ucsc"], env)
        snapshot_b = dump_store_sans_timestamps(env["REPOAFFIL_STORE"])
        assert "unique repos: 36" in first.output
        assert "unique repos: 36" in second.output
        assert snapshot_a["repos"] == snapshot_b["repos"]
        assert snapshot_a["search_matches"] == snapshot_b["search_matches"]


class TestEnrich:
    def test_contributor_resume_fetches_only_remainder(self, env, servers):
        gh, _ = servers
        assert run(["discover", "--institution", "ucsc"], env).exit_code == 0
        before = gh.count_matching("/contributors")
        result = run(["enrich", "--phase", "contributors", "--limit", "10"], env)
        assert "processed 10 repos" in result.output
        assert gh.count_matching("/contributors") == before + 10
        result = run(["enrich", "--phase", "contributors"], env)
        assert "processed 26 repos" in result.output
        assert gh.count_matching("/contributors") == before + 36
        # fully enriched: a rerun is a no-op
        result = run(["enrich", "--phase", "contributors"], env)
        assert "processed 0 repos" in result.output

    def test_empty_store_is_noop(self, env):
        result = run(["enrich", "--phase", "contributors"], env)
        assert "processed 0 repos" in result.output

    def test_orgs_phase(self, env):
        assert run(["discover", "--institution", "ucsc"], env).exit_code == 0
        result = run(["enrich", "--phase", "orgs"], env)
        assert result.exit_code == 0
        with Store(env["REPOAFFIL_STORE"]) as db:
            org = db.get_org("ucsc-labs")
        assert org is not None and org.email == "ospo@ucsc.edu"


class TestClassify:
    def test_sbc_matches_oracle_over_store(self, env, ucsc):
        discover_and_enrich(env)
        result = run(["classify", "--method", "sbc", "--institution", "ucsc"], env)
        assert result.exit_code == 0
        with Store(env["REPOAFFIL_STORE"]) as db:
            predictions = db.predictions(institution_id="ucsc", classifier="sbc")
            assert predictions
            for p in predictions:
                repo = db.get_repo(p.repo_id)
                org = db.org_for_repo(p.repo_id)
                top2 = db.contributors_for(p.repo_id, max_rank=2)
                assert p.probability == oracle_score(repo, org, top2, ucsc), p.repo_id

    def test_limit_zero_is_noop(self, env):
        discover_and_enrich(env)
        result = run(
            ["classify", "--method", "sbc", "--institution", "ucsc", "--limit", "0"], env
        )
        assert "nothing to classify" in result.output

    def test_svm_missing_model_file_named(self, env, tmp_path):
        discover_and_enrich(env)
        missing = str(tmp_path / "nope.json")
        result = CliRunner().invoke(
            cli,
            ["classify", "--method", "svm", "--institution", "ucsc", "--model", missing],
            env=env,
        )
        assert result.exit_code == 1
        assert missing in result.output

    def test_llm_predictions_carry_mock_model_tag(self, env, corpus):
        discover_and_enrich(env)
        result = run(
            [
                "classify", "--method", "llm", "--institution", "ucsc",
                "--model", "mock-chat-1", "--seed", "3", "--limit", "5",
            ],
            env,
        )
        assert result.exit_code == 0
        with Store(env["REPOAFFIL_STORE"]) as db:
            predictions = db.predictions(institution_id="ucsc", classifier="llm")
        assert len(predictions) == 5
        assert all(p.model_tag == "mock-chat-1:seed=3" for p in predictions)
        # verdicts track planted truth on this clean corpus
        for p in predictions:
            expected = corpus.truth["ucsc"][p.repo_id]
            assert (p.probability > 0.5) == (expected == 1)
            assert p.explanation


class TestTrainEvaluate:
    def test_train_insufficient_labels_exits_1(self, env):
        discover_and_enrich(env)
        result = CliRunner().invoke(
            cli, ["train", "--institution", "ucsc", "--n", "500"], env=env
        )
        assert result.exit_code == 1
        assert "500" in result.output

    def test_train_then_evaluate_deterministic(self, env, corpus, tmp_path):
        discover_and_enrich(env)
        truth_csv = tmp_path / "truth.csv"
        write_truth_csv(corpus, truth_csv)
        assert run(["import-labels", "--file", str(truth_csv)], env).exit_code == 0

        model_path = tmp_path / "svm.json"
        train_args = [
            "train", "--institution", "ucsc", "--n", "24", "--seed", "5",
            "--model-out", str(model_path),
        ]
        assert run(train_args, env).exit_code == 0
        first_model = model_path.read_text()
        assert run(train_args, env).exit_code == 0
        assert model_path.read_text() == first_model

        eval_args = [
            "evaluate", "--institution", "ucsc", "--classifier", "svm",
            "--model", str(model_path), "--seed", "5", "--n-per-class", "4",
            "--out", str(tmp_path / "report.json"),
        ]
        assert run(eval_args, env).exit_code == 0
        report_a = (tmp_path / "report.json").read_text()
        assert run(eval_args, env).exit_code == 0
        assert (tmp_path / "report.json").read_text() == report_a
        doc = json.loads(report_a)
        assert doc["auc"] >= 0.95
        assert doc["n_positive"] == 4 and doc["n_negative"] == 4

    def test_evaluate_sbc_without_model(self, env, corpus, tmp_path):
        discover_and_enrich(env)
        truth_csv = tmp_path / "truth.csv"
        write_truth_csv(corpus, truth_csv)
        run(["import-labels", "--file", str(truth_csv)], env)
        result = run(
            [
                "evaluate", "--institution", "ucsc", "--classifier", "sbc",
                "--seed", "1", "--n-per-class", "5",
                "--out", str(tmp_path / "sbc.json"),
            ],
            env,
        )
        assert result.exit_code == 0
        assert "AUC" in result.output

    def test_evaluate_insufficient_balanced_pool(self, env, corpus, tmp_path):
        discover_and_enrich(env)
        truth_csv = tmp_path / "truth.csv"
        write_truth_csv(corpus, truth_csv)
        run(["import-labels", "--file", str(truth_csv)], env)
        result = CliRunner().invoke(
            cli,
            ["evaluate", "--institution", "ucsc", "--classifier", "sbc",
             "--n-per-class", "100"],
            env=env,
        )
        assert result.exit_code == 1
        assert "positive" in result.output


class TestReportAndExport:
    def _prepared(self, env, corpus, tmp_path):
        discover_and_enrich(env)
        run(["classify", "--method", "sbc", "--institution", "ucsc"], env)

    def test_report_text_and_json(self, env, corpus, tmp_path):
        self._prepared(env, corpus, tmp_path)
        text = run(["report", "--classifier", "sbc", "--threshold", "0.5"], env)
        assert "Institution" in text.output and "TOTAL" in text.output
        as_json = run(
            ["report", "--classifier", "sbc", "--threshold", "0.5", "--format", "json"],
            env,
        )
        doc = json.loads(as_json.output)
        assert "affiliation_rates" in doc and "languages" in doc

    def test_export_counts(self, env, corpus, tmp_path):
        self._prepared(env, corpus, tmp_path)
        dest = tmp_path / "repos.csv"
        result = run(
            ["export", "--table", "repos", "--format", "csv", "--dest", str(dest)], env
        )
        assert "wrote 36 rows" in result.output
        with dest.open(newline="", encoding="utf-8") as fh:
            assert len(list(csv.DictReader(fh))) == 36

    def test_export_unwritable_dest_exits_3(self, env, corpus, tmp_path):
        self._prepared(env, corpus, tmp_path)
        result = CliRunner().invoke(
            cli,
            ["export", "--table", "repos", "--format", "csv",
             "--dest", str(tmp_path / "no" / "dir" / "f.csv")],
            env=env,
        )
        assert result.exit_code == 3


class TestCost:
    def test_text_row(self, env):
        result = run(
            ["cost", "--model-tag", "svm", "--avg-chars", "2900",
             "--price-in", "0.00002", "--n-items", "52000"],
            env,
        )
        assert result.exit_code == 0
        assert "725" in result.output


class TestServe:
    def test_port_busy_exits_2(self, env, tmp_path):
        run(["discover", "--institution", "ucsc"], env)
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            result = CliRunner().invoke(cli, ["serve", "--port", str(port)], env=env)
            assert result.exit_code == 2
        finally:
            blocker.close()
