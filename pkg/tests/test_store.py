import csv
import json
import sqlite3

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repoaffil.errors import DataError, NotFoundError, StoreError
from repoaffil.model import CommunityFlags, LabelRecord, Prediction, RepoRecord
from repoaffil.store import EXPORT_COLUMNS, Store

from conftest import make_contributor, make_org, make_repo


def repo_with_matches(repo_id, matches):
    return make_repo(repo_id=repo_id, matched_queries=tuple(matches))


class TestUpsertDedup:
    def test_same_repo_via_two_queries(self, store):
        first = repo_with_matches("o/r", [("ucsc", "name", "UCSC")])
        second = repo_with_matches("o/r", [("ucsc", "readme", "UC Santa Cruz")])
        assert store.upsert_repo(first) == "inserted"
        assert store.upsert_repo(second) == "merged"
        stored = store.get_repo("o/r")
        assert len(stored.matched_queries) == 2
        assert store.raw_match_count("ucsc") == 2
        assert store.unique_repo_count("ucsc") == 1

    def test_identical_insert_idempotent(self, store):
        record = repo_with_matches("o/r", [("ucsc", "name", "UCSC")])
        store.upsert_repo(record)
        before = store.get_repo("o/r")
        assert store.upsert_repo(record) == "merged"
        assert store.get_repo("o/r") == before

    def test_three_fixtures_one_duplicated(self, store):
        store.upsert_repo(repo_with_matches("o/a", [("ucsc", "name", "UCSC")]))
        store.upsert_repo(repo_with_matches("o/b", [("ucsc", "name", "UCSC")]))
        store.upsert_repo(
            repo_with_matches("o/a", [("ucsc", "topics", "uc-santa-cruz")])
        )
        assert store.unique_repo_count("ucsc") == 2
        assert store.raw_match_count("ucsc") == 3

    def test_unique_never_exceeds_raw(self, store):
        import random

        rng = random.Random(1)
        attrs = ("name", "description", "readme", "topics", "email")
        for i in range(60):
            matches = {
                ("ucsc", rng.choice(attrs), f"kw{rng.randrange(4)}")
                for _ in range(rng.randint(1, 3))
            }
            store.upsert_repo(repo_with_matches(f"o/r{rng.randrange(20)}", matches))
        assert store.unique_repo_count("ucsc") <= store.raw_match_count("ucsc")

    def test_provenance_required(self, store):
        with pytest.raises(DataError):
            store.upsert_repo(make_repo(matched_queries=()))


class TestReferentialIntegrity:
    def test_label_requires_repo(self, store):
        with pytest.raises(NotFoundError):
            store.add_label(LabelRecord("ghost/r", "ucsc", 1))

    def test_prediction_requires_repo(self, store):
        with pytest.raises(NotFoundError):
            store.add_prediction(Prediction("ghost/r", "ucsc", "sbc", "t", 0.5))

    def test_every_row_references_existing_repo(self, store):
        store.upsert_repo(repo_with_matches("o/r", [("ucsc", "name", "UCSC")]))
        store.add_label(LabelRecord("o/r", "ucsc", 1, "me"))
        store.add_prediction(Prediction("o/r", "ucsc", "sbc", "t", 0.4))
        repo_ids = set(store.repo_ids())
        assert all(l.repo_id in repo_ids for l in store.labels())
        assert all(p.repo_id in repo_ids for p in store.predictions())


class TestSchemaVersion:
    def test_newer_schema_fails_loudly(self, tmp_path):
        path = tmp_path / "future.db"
        conn = sqlite3.connect(path)
        conn.execute("CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL)")
        conn.execute("INSERT INTO meta VALUES ('schema_version', '99')")
        conn.commit()
        conn.close()
        with pytest.raises(StoreError, match="99"):
            Store(path)

    def test_reopen_existing(self, tmp_path):
        path = tmp_path / "s.db"
        db = Store(path)
        db.upsert_repo(repo_with_matches("o/r", [("ucsc", "name", "UCSC")]))
        db.close()
        again = Store(path)
        assert again.get_repo("o/r") is not None
        again.close()


class TestQueryCandidates:
    def _seed(self, store):
        for rid in ("o/a", "o/b", "o/c"):
            store.upsert_repo(repo_with_matches(rid, [("ucsc", "name", "UCSC")]))
        for rid, prob in (("o/a", 0.2), ("o/b", 0.9), ("o/c", 0.5)):
            store.add_prediction(Prediction(rid, "ucsc", "sbc", "t", prob))

    def test_probability_filter_and_ordering(self, store):
        self._seed(store)
        assert store.query_candidates(
            "ucsc", classifier="sbc", max_probability=0.6
        ) == ["o/a", "o/c"]

    def test_no_classifier_orders_by_repo_id(self, store):
        self._seed(store)
        assert store.query_candidates("ucsc") == ["o/a", "o/b", "o/c"]

    def test_unlabeled_only(self, store):
        self._seed(store)
        for rid in ("o/a", "o/b", "o/c"):
            store.add_label(LabelRecord(rid, "ucsc", 0, "me"))
        assert store.query_candidates("ucsc", unlabeled_only=True) == []

    def test_unknown_institution(self, store):
        with pytest.raises(NotFoundError):
            store.query_candidates("nowhere")

    def test_max_probability_requires_classifier(self, store):
        self._seed(store)
        with pytest.raises(ValueError):
            store.query_candidates("ucsc", max_probability=0.5)


class TestLabels:
    def test_relabel_overwrites_with_audit(self, store):
        store.upsert_repo(repo_with_matches("o/r", [("ucsc", "name", "UCSC")]))
        assert store.add_label(LabelRecord("o/r", "ucsc", 0, "me")) == "inserted"
        assert store.add_label(LabelRecord("o/r", "ucsc", 1, "me")) == "updated"
        labels = store.labels(institution_id="ucsc")
        assert len(labels) == 1 and labels[0].label == 1

    def test_effective_labels_latest_wins(self, store):
        store.upsert_repo(repo_with_matches("o/r", [("ucsc", "name", "UCSC")]))
        store.add_label(LabelRecord("o/r", "ucsc", 0, "alice", "2025-01-01T00:00:00"))
        store.add_label(LabelRecord("o/r", "ucsc", 1, "bob", "2025-02-01T00:00:00"))
        effective = store.effective_labels("ucsc")
        assert len(effective) == 1 and effective[0].label == 1

    def test_label_summary(self, store):
        for rid in ("o/a", "o/b", "o/c"):
            store.upsert_repo(repo_with_matches(rid, [("ucsc", "name", "UCSC")]))
        store.add_label(LabelRecord("o/a", "ucsc", 1, "me"))
        store.add_label(LabelRecord("o/b", "ucsc", 0, "me"))
        summary = store.label_summary("ucsc")
        assert summary == {
            "labeled_count": 2,
            "unlabeled_count": 1,
            "positive_count": 1,
            "negative_count": 1,
        }


class TestExports:
    def test_empty_store_csv_header_only(self, store, tmp_path):
        dest = tmp_path / "repos.csv"
        assert store.export_table("repos", "csv", dest) == 0
        rows = list(csv.reader(dest.open(newline="", encoding="utf-8")))
        assert rows == [list(EXPORT_COLUMNS["repos"])]

    def test_prediction_count_identity(self, store, tmp_path):
        store.upsert_repo(repo_with_matches("o/r", [("ucsc", "name", "UCSC")]))
        for i in range(5):
            store.add_prediction(
                Prediction("o/r", "ucsc", "sbc", f"tag{i}", i / 10)
            )
        dest = tmp_path / "p.csv"
        assert store.export_table("predictions", "csv", dest) == 5
        with dest.open(newline="", encoding="utf-8") as fh:
            assert len(list(csv.DictReader(fh))) == 5

    def test_unwritable_dest(self, store, tmp_path):
        with pytest.raises(StoreError):
            store.export_table("repos", "csv", tmp_path / "no" / "such" / "dir.csv")

    def test_jsonl_round_trip(self, store, tmp_path):
        record = make_repo(
            repo_id="own/thing",
            description='tricky, "quoted"\nnewline',
            readme_text="line1\r\nline2,comma",
            topics=("a", "b"),
            stars=3,
            matched_queries=(("ucsc", "name", "UC Santa Cruz"),),
        )
        store.upsert_repo(record)
        dest = tmp_path / "repos.jsonl"
        store.export_table("repos", "jsonl", dest)
        row = json.loads(dest.read_text(encoding="utf-8").splitlines()[0])
        assert row["description"] == record.description
        assert row["readme_text"] == record.readme_text
        assert row["topics"] == ["a", "b"]
        assert row["matched_queries"] == [["ucsc", "name", "UC Santa Cruz"]]

    def test_csv_round_trip(self, store, tmp_path):
        record = make_repo(
            repo_id="own/thing",
            description='comma, "quotes" and\nnewline',
            readme_text="multi\r\nline",
            matched_queries=(("ucsc", "name", "UCSC"),),
        )
        store.upsert_repo(record)
        dest = tmp_path / "repos.csv"
        store.export_table("repos", "csv", dest)
        with dest.open(newline="", encoding="utf-8") as fh:
            row = next(csv.DictReader(fh))
        assert row["description"] == record.description
        assert row["readme_text"] == record.readme_text
        assert json.loads(row["matched_queries"]) == [["ucsc", "name", "UCSC"]]


_safe_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40
)


@settings(max_examples=40, deadline=None)
@given(
    description=_safe_text,
    readme=_safe_text,
    language=_safe_text,
    stars=st.integers(min_value=0, max_value=10**6),
)
def test_export_round_trip_property(tmp_path_factory, description, readme, language, stars):
    tmp = tmp_path_factory.mktemp("prop")
    db = Store(tmp / "s.db")
    try:
        record = make_repo(
            repo_id="p/q",
            description=description,
            readme_text=readme,
            primary_language=language,
            stars=stars,
            matched_queries=(("ucsc", "name", "UCSC"),),
        )
        db.upsert_repo(record)
        dest_csv = tmp / "r.csv"
        dest_jsonl = tmp / "r.jsonl"
        db.export_table("repos", "csv", dest_csv)
        db.export_table("repos", "jsonl", dest_jsonl)
        with dest_csv.open(newline="", encoding="utf-8") as fh:
            csv_row = next(csv.DictReader(fh))
        jsonl_row = json.loads(dest_jsonl.read_text(encoding="utf-8").splitlines()[0])
        for row, caster in ((csv_row, int), (jsonl_row, lambda x: x)):
            assert row["description"] == description
            assert row["readme_text"] == readme
            assert row["primary_language"] == language
            assert caster(row["stars"]) == stars
    finally:
        db.close()


class TestContributorsAndOrgs:
    def test_contributor_round_trip(self, store):
        store.upsert_repo(repo_with_matches("o/r", [("ucsc", "name", "UCSC")]))
        records = [
            make_contributor("o/r", "alice", 1, email="a@ucsc.edu", organizations=("lab",)),
            make_contributor("o/r", "bob", 2),
            make_contributor("o/r", "carol", 3),
        ]
        store.upsert_contributors("o/r", records)
        assert store.contributors_for("o/r") == records
        assert store.contributors_for("o/r", max_rank=2) == records[:2]
        assert store.repos_pending_contributors() == []

    def test_org_round_trip(self, store):
        org = make_org(login="lab", email="ospo@ucsc.edu", url="https://ucsc.edu")
        store.upsert_org(org)
        assert store.get_org("lab") == org
        assert store.get_org("ghost") is None

    def test_org_for_repo_requires_org_owner(self, store):
        store.upsert_repo(
            make_repo(
                repo_id="lab/r",
                owner_login="lab",
                owner_kind="organization",
                matched_queries=(("ucsc", "name", "UCSC"),),
            )
        )
        store.upsert_org(make_org(login="lab"))
        assert store.org_for_repo("lab/r").login == "lab"
        store.upsert_repo(
            make_repo(
                repo_id="user/r",
                owner_login="user",
                owner_kind="user",
                matched_queries=(("ucsc", "name", "UCSC"),),
            )
        )
        assert store.org_for_repo("user/r") is None
