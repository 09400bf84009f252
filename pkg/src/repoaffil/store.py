"""Single-file SQLite persistence for scraped records, labels, and predictions.

One Store instance owns one connection; every call serializes through an
internal lock (single-writer, reads see committed state). Provenance triples
live in their own table so cross-query deduplication is a union, never a loss.
"""

from __future__ import annotations

import csv
import io
import json
import sqlite3
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import DataError, NotFoundError, StoreError
from .model import (
    CommunityFlags,
    ContributorRecord,
    InstitutionProfile,
    LabelRecord,
    OrgRecord,
    Prediction,
    RepoRecord,
)

SCHEMA_VERSION = 1

EXPORT_TABLES = ("repos", "contributors", "orgs", "predictions", "labels")

# Documented column order per exported table (the column dictionary).
EXPORT_COLUMNS: dict[str, tuple[str, ...]] = {
    "repos": (
        "repo_id",
        "name",
        "description",
        "homepage",
        "topics",
        "primary_language",
        "license_id",
        "owner_login",
        "owner_kind",
        "stars",
        "forks",
        "subscribers",
        "release_download_count",
        "created_at",
        "updated_at",
        "github_id",
        "has_readme",
        "has_license",
        "has_code_of_conduct",
        "has_contributing",
        "has_security_policy",
        "has_issue_template",
        "has_pr_template",
        "has_description",
        "matched_queries",
        "readme_text",
    ),
    "contributors": (
        "repo_id",
        "username",
        "rank",
        "name",
        "bio",
        "location",
        "company",
        "email",
        "twitter",
        "organizations",
    ),
    "orgs": (
        "login",
        "name",
        "company",
        "location",
        "description",
        "email",
        "url",
        "created_at",
    ),
    "predictions": (
        "repo_id",
        "institution_id",
        "classifier",
        "model_tag",
        "probability",
        "explanation",
        "produced_at",
    ),
    "labels": ("repo_id", "institution_id", "labeler", "label", "labeled_at"),
}

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS institutions (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    acronym TEXT NOT NULL,
    domain TEXT NOT NULL,
    alternates TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS repos (
    repo_id TEXT PRIMARY KEY,
    name TEXT NOT NULL DEFAULT '',
    description TEXT NOT NULL DEFAULT '',
    homepage TEXT NOT NULL DEFAULT '',
    readme_text TEXT NOT NULL DEFAULT '',
    topics TEXT NOT NULL DEFAULT '[]',
    primary_language TEXT NOT NULL DEFAULT '',
    license_id TEXT NOT NULL DEFAULT 'NONE',
    owner_login TEXT NOT NULL DEFAULT '',
    owner_kind TEXT NOT NULL DEFAULT 'user',
    stars INTEGER NOT NULL DEFAULT 0,
    forks INTEGER NOT NULL DEFAULT 0,
    subscribers INTEGER NOT NULL DEFAULT 0,
    release_download_count INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL DEFAULT '',
    updated_at TEXT NOT NULL DEFAULT '',
    github_id INTEGER NOT NULL DEFAULT 0,
    has_readme INTEGER NOT NULL DEFAULT 0,
    has_license INTEGER NOT NULL DEFAULT 0,
    has_code_of_conduct INTEGER NOT NULL DEFAULT 0,
    has_contributing INTEGER NOT NULL DEFAULT 0,
    has_security_policy INTEGER NOT NULL DEFAULT 0,
    has_issue_template INTEGER NOT NULL DEFAULT 0,
    has_pr_template INTEGER NOT NULL DEFAULT 0,
    has_description INTEGER NOT NULL DEFAULT 0,
    contributors_fetched_at TEXT NOT NULL DEFAULT '',
    org_fetched_at TEXT NOT NULL DEFAULT '',
    fetched_at TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS search_matches (
    repo_id TEXT NOT NULL,
    institution_id TEXT NOT NULL,
    attribute TEXT NOT NULL,
    keyword TEXT NOT NULL,
    PRIMARY KEY (repo_id, institution_id, attribute, keyword)
);
CREATE TABLE IF NOT EXISTS contributors (
    repo_id TEXT NOT NULL,
    username TEXT NOT NULL,
    rank INTEGER NOT NULL,
    name TEXT NOT NULL DEFAULT '',
    bio TEXT NOT NULL DEFAULT '',
    location TEXT NOT NULL DEFAULT '',
    company TEXT NOT NULL DEFAULT '',
    email TEXT NOT NULL DEFAULT '',
    twitter TEXT NOT NULL DEFAULT '',
    organizations TEXT NOT NULL DEFAULT '[]',
    PRIMARY KEY (repo_id, username)
);
CREATE TABLE IF NOT EXISTS orgs (
    login TEXT PRIMARY KEY,
    name TEXT NOT NULL DEFAULT '',
    company TEXT NOT NULL DEFAULT '',
    location TEXT NOT NULL DEFAULT '',
    description TEXT NOT NULL DEFAULT '',
    email TEXT NOT NULL DEFAULT '',
    url TEXT NOT NULL DEFAULT '',
    created_at TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS labels (
    repo_id TEXT NOT NULL,
    institution_id TEXT NOT NULL,
    labeler TEXT NOT NULL,
    label INTEGER NOT NULL,
    labeled_at TEXT NOT NULL DEFAULT '',
    PRIMARY KEY (repo_id, institution_id, labeler)
);
CREATE TABLE IF NOT EXISTS predictions (
    repo_id TEXT NOT NULL,
    institution_id TEXT NOT NULL,
    classifier TEXT NOT NULL,
    model_tag TEXT NOT NULL,
    probability REAL NOT NULL,
    explanation TEXT NOT NULL DEFAULT '',
    produced_at TEXT NOT NULL DEFAULT '',
    PRIMARY KEY (repo_id, institution_id, classifier, model_tag)
);
CREATE TABLE IF NOT EXISTS embedding_cache (
    repo_id TEXT NOT NULL,
    model_tag TEXT NOT NULL,
    text_hash TEXT NOT NULL,
    dim INTEGER NOT NULL,
    vector TEXT NOT NULL,
    PRIMARY KEY (repo_id, model_tag, text_hash)
);
CREATE TABLE IF NOT EXISTS raw_payloads (
    endpoint TEXT NOT NULL,
    key TEXT NOT NULL,
    payload TEXT NOT NULL,
    fetched_at TEXT NOT NULL DEFAULT '',
    PRIMARY KEY (endpoint, key)
);
CREATE TABLE IF NOT EXISTS audit_log (
    at TEXT NOT NULL,
    event TEXT NOT NULL,
    detail TEXT NOT NULL DEFAULT ''
);
"""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class Store:
    """Durable pipeline state behind one SQLite file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA journal_mode=WAL")
        existing = self._conn.execute(
            "SELECT name FROM sqlite_master WHERE type='table' AND name='meta'"
        ).fetchone()
        if existing:
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key='schema_version'"
            ).fetchone()
            version = int(row["value"]) if row else 0
            if version > SCHEMA_VERSION:
                self._conn.close()
                raise StoreError(
                    f"store {self.path} has schema_version {version}; this build "
                    f"understands {SCHEMA_VERSION}"
                )
        self._conn.executescript(_SCHEMA)
        self._conn.execute(
            "INSERT OR IGNORE INTO meta(key, value) VALUES ('schema_version', ?)",
            (str(SCHEMA_VERSION),),
        )
        self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # ------------------------------------------------------------- institutions

    def register_institutions(self, profiles: Iterable[InstitutionProfile]) -> None:
        with self._lock:
            for p in profiles:
                self._conn.execute(
                    "INSERT OR REPLACE INTO institutions(id, name, acronym, domain, alternates) "
                    "VALUES (?, ?, ?, ?, ?)",
                    (p.id, p.name, p.acronym, p.domain, json.dumps(list(p.alternates))),
                )
            self._conn.commit()

    def institutions(self) -> list[InstitutionProfile]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM institutions ORDER BY id"
            ).fetchall()
        return [
            InstitutionProfile(
                id=r["id"],
                name=r["name"],
                acronym=r["acronym"],
                domain=r["domain"],
                alternates=tuple(json.loads(r["alternates"])),
            )
            for r in rows
        ]

    def _known_institution(self, institution_id: str) -> bool:
        row = self._conn.execute(
            "SELECT 1 FROM institutions WHERE id=? "
            "UNION SELECT 1 FROM search_matches WHERE institution_id=? LIMIT 1",
            (institution_id, institution_id),
        ).fetchone()
        return row is not None

    # -------------------------------------------------------------------- repos

    def upsert_repo(self, record: RepoRecord) -> str:
        """Insert a new repo or merge into an existing row.

        Merging refreshes metadata and unions the provenance triples; returns
        "inserted" or "merged".
        """
        if not record.matched_queries:
            raise DataError(
                f"repo {record.repo_id}: discovery records need >=1 matched query"
            )
        with self._lock:
            existed = (
                self._conn.execute(
                    "SELECT 1 FROM repos WHERE repo_id=?", (record.repo_id,)
                ).fetchone()
                is not None
            )
            flags = record.community
            self._conn.execute(
                """
                INSERT INTO repos (
                    repo_id, name, description, homepage, readme_text, topics,
                    primary_language, license_id, owner_login, owner_kind, stars,
                    forks, subscribers, release_download_count, created_at,
                    updated_at, github_id, has_readme, has_license,
                    has_code_of_conduct, has_contributing, has_security_policy,
                    has_issue_template, has_pr_template, has_description, fetched_at
                ) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)
                ON CONFLICT(repo_id) DO UPDATE SET
                    name=excluded.name, description=excluded.description,
                    homepage=excluded.homepage, readme_text=excluded.readme_text,
                    topics=excluded.topics,
                    primary_language=excluded.primary_language,
                    license_id=excluded.license_id,
                    owner_login=excluded.owner_login,
                    owner_kind=excluded.owner_kind, stars=excluded.stars,
                    forks=excluded.forks, subscribers=excluded.subscribers,
                    release_download_count=excluded.release_download_count,
                    created_at=excluded.created_at, updated_at=excluded.updated_at,
                    github_id=excluded.github_id, has_readme=excluded.has_readme,
                    has_license=excluded.has_license,
                    has_code_of_conduct=excluded.has_code_of_conduct,
                    has_contributing=excluded.has_contributing,
                    has_security_policy=excluded.has_security_policy,
                    has_issue_template=excluded.has_issue_template,
                    has_pr_template=excluded.has_pr_template,
                    has_description=excluded.has_description,
                    fetched_at=excluded.fetched_at
                """,
                (
                    record.repo_id,
                    record.name,
                    record.description,
                    record.homepage,
                    record.readme_text,
                    json.dumps(list(record.topics)),
                    record.primary_language,
                    record.license_id,
                    record.owner_login,
                    record.owner_kind,
                    record.stars,
                    record.forks,
                    record.subscribers,
                    record.release_download_count,
                    record.created_at,
                    record.updated_at,
                    record.github_id,
                    int(flags.has_readme),
                    int(flags.has_license),
                    int(flags.has_code_of_conduct),
                    int(flags.has_contributing),
                    int(flags.has_security_policy),
                    int(flags.has_issue_template),
                    int(flags.has_pr_template),
                    int(flags.has_description),
                    _now(),
                ),
            )
            for inst, attribute, keyword in record.matched_queries:
                self._conn.execute(
                    "INSERT OR IGNORE INTO search_matches(repo_id, institution_id, attribute, keyword) "
                    "VALUES (?,?,?,?)",
                    (record.repo_id, inst, attribute, keyword),
                )
            self._conn.commit()
        return "merged" if existed else "inserted"

    def _row_to_repo(self, row: sqlite3.Row) -> RepoRecord:
        matches = self._conn.execute(
            "SELECT institution_id, attribute, keyword FROM search_matches "
            "WHERE repo_id=? ORDER BY institution_id, attribute, keyword",
            (row["repo_id"],),
        ).fetchall()
        return RepoRecord(
            repo_id=row["repo_id"],
            name=row["name"],
            description=row["description"],
            homepage=row["homepage"],
            readme_text=row["readme_text"],
            topics=tuple(json.loads(row["topics"])),
            primary_language=row["primary_language"],
            license_id=row["license_id"],
            owner_login=row["owner_login"],
            owner_kind=row["owner_kind"],
            stars=row["stars"],
            forks=row["forks"],
            subscribers=row["subscribers"],
            release_download_count=row["release_download_count"],
            created_at=row["created_at"],
            updated_at=row["updated_at"],
            github_id=row["github_id"],
            community=CommunityFlags(
                has_readme=bool(row["has_readme"]),
                has_license=bool(row["has_license"]),
                has_code_of_conduct=bool(row["has_code_of_conduct"]),
                has_contributing=bool(row["has_contributing"]),
                has_security_policy=bool(row["has_security_policy"]),
                has_issue_template=bool(row["has_issue_template"]),
                has_pr_template=bool(row["has_pr_template"]),
                has_description=bool(row["has_description"]),
            ),
            matched_queries=tuple(
                (m["institution_id"], m["attribute"], m["keyword"]) for m in matches
            ),
        )

    def get_repo(self, repo_id: str) -> Optional[RepoRecord]:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM repos WHERE repo_id=?", (repo_id,)
            ).fetchone()
            return self._row_to_repo(row) if row else None

    def repo_ids(self, institution_id: Optional[str] = None) -> list[str]:
        with self._lock:
            if institution_id is None:
                rows = self._conn.execute(
                    "SELECT repo_id FROM repos ORDER BY repo_id"
                ).fetchall()
            else:
                rows = self._conn.execute(
                    "SELECT DISTINCT repo_id FROM search_matches "
                    "WHERE institution_id=? ORDER BY repo_id",
                    (institution_id,),
                ).fetchall()
        return [r["repo_id"] for r in rows]

    def iter_repos(self, institution_id: Optional[str] = None) -> list[RepoRecord]:
        with self._lock:
            return [
                repo
                for rid in self.repo_ids(institution_id)
                if (repo := self.get_repo(rid)) is not None
            ]

    def raw_match_count(self, institution_id: Optional[str] = None) -> int:
        """Total provenance triples: one repo hit by k queries counts k times."""
        with self._lock:
            if institution_id is None:
                row = self._conn.execute("SELECT COUNT(*) c FROM search_matches").fetchone()
            else:
                row = self._conn.execute(
                    "SELECT COUNT(*) c FROM search_matches WHERE institution_id=?",
                    (institution_id,),
                ).fetchone()
        return row["c"]

    def unique_repo_count(self, institution_id: Optional[str] = None) -> int:
        with self._lock:
            if institution_id is None:
                row = self._conn.execute("SELECT COUNT(*) c FROM repos").fetchone()
            else:
                row = self._conn.execute(
                    "SELECT COUNT(DISTINCT repo_id) c FROM search_matches "
                    "WHERE institution_id=?",
                    (institution_id,),
                ).fetchone()
        return row["c"]

    # ------------------------------------------------------------- contributors

    def upsert_contributors(
        self, repo_id: str, records: Sequence[ContributorRecord]
    ) -> None:
        with self._lock:
            if not self._conn.execute(
                "SELECT 1 FROM repos WHERE repo_id=?", (repo_id,)
            ).fetchone():
                raise NotFoundError(f"repo {repo_id} not in store")
            self._conn.execute("DELETE FROM contributors WHERE repo_id=?", (repo_id,))
            for rec in records:
                if rec.repo_id != repo_id:
                    raise DataError(
                        f"contributor {rec.username} carries repo {rec.repo_id}, "
                        f"expected {repo_id}"
                    )
                self._conn.execute(
                    "INSERT INTO contributors(repo_id, username, rank, name, bio, "
                    "location, company, email, twitter, organizations) "
                    "VALUES (?,?,?,?,?,?,?,?,?,?)",
                    (
                        rec.repo_id,
                        rec.username,
                        rec.rank,
                        rec.name,
                        rec.bio,
                        rec.location,
                        rec.company,
                        rec.email,
                        rec.twitter,
                        json.dumps(list(rec.organizations)),
                    ),
                )
            self._conn.execute(
                "UPDATE repos SET contributors_fetched_at=? WHERE repo_id=?",
                (_now(), repo_id),
            )
            self._conn.commit()

    def contributors_for(
        self, repo_id: str, max_rank: Optional[int] = None
    ) -> list[ContributorRecord]:
        with self._lock:
            if max_rank is None:
                rows = self._conn.execute(
                    "SELECT * FROM contributors WHERE repo_id=? ORDER BY rank",
                    (repo_id,),
                ).fetchall()
            else:
                rows = self._conn.execute(
                    "SELECT * FROM contributors WHERE repo_id=? AND rank<=? ORDER BY rank",
                    (repo_id, max_rank),
                ).fetchall()
        return [
            ContributorRecord(
                repo_id=r["repo_id"],
                username=r["username"],
                rank=r["rank"],
                name=r["name"],
                bio=r["bio"],
                location=r["location"],
                company=r["company"],
                email=r["email"],
                twitter=r["twitter"],
                organizations=tuple(json.loads(r["organizations"])),
            )
            for r in rows
        ]

    def repos_pending_contributors(self) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT repo_id FROM repos WHERE contributors_fetched_at='' ORDER BY repo_id"
            ).fetchall()
        return [r["repo_id"] for r in rows]

    # --------------------------------------------------------------------- orgs

    def upsert_org(self, record: OrgRecord) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO orgs(login, name, company, location, "
                "description, email, url, created_at) VALUES (?,?,?,?,?,?,?,?)",
                (
                    record.login,
                    record.name,
                    record.company,
                    record.location,
                    record.description,
                    record.email,
                    record.url,
                    record.created_at,
                ),
            )
            self._conn.commit()

    def get_org(self, login: str) -> Optional[OrgRecord]:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM orgs WHERE login=?", (login,)
            ).fetchone()
        if row is None:
            return None
        return OrgRecord(
            login=row["login"],
            name=row["name"],
            company=row["company"],
            location=row["location"],
            description=row["description"],
            email=row["email"],
            url=row["url"],
            created_at=row["created_at"],
        )

    def org_for_repo(self, repo_id: str) -> Optional[OrgRecord]:
        repo = self.get_repo(repo_id)
        if repo is None or repo.owner_kind != "organization":
            return None
        return self.get_org(repo.owner_login)

    def mark_org_fetched(self, repo_id: str) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE repos SET org_fetched_at=? WHERE repo_id=?", (_now(), repo_id)
            )
            self._conn.commit()

    def repos_pending_org(self) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT repo_id FROM repos WHERE org_fetched_at='' ORDER BY repo_id"
            ).fetchall()
        return [r["repo_id"] for r in rows]

    # ------------------------------------------------------------------- labels

    def add_label(self, record: LabelRecord) -> str:
        """Persist a label; relabeling by the same labeler overwrites with audit."""
        with self._lock:
            if not self._conn.execute(
                "SELECT 1 FROM repos WHERE repo_id=?", (record.repo_id,)
            ).fetchone():
                raise NotFoundError(f"repo {record.repo_id} not in store")
            existing = self._conn.execute(
                "SELECT label FROM labels WHERE repo_id=? AND institution_id=? AND labeler=?",
                (record.repo_id, record.institution_id, record.labeler),
            ).fetchone()
            labeled_at = record.labeled_at or _now()
            self._conn.execute(
                "INSERT OR REPLACE INTO labels(repo_id, institution_id, labeler, label, labeled_at) "
                "VALUES (?,?,?,?,?)",
                (
                    record.repo_id,
                    record.institution_id,
                    record.labeler,
                    record.label,
                    labeled_at,
                ),
            )
            if existing is not None:
                self._conn.execute(
                    "INSERT INTO audit_log(at, event, detail) VALUES (?,?,?)",
                    (
                        _now(),
                        "relabel",
                        json.dumps(
                            {
                                "repo_id": record.repo_id,
                                "institution_id": record.institution_id,
                                "labeler": record.labeler,
                                "old": existing["label"],
                                "new": record.label,
                            }
                        ),
                    ),
                )
            self._conn.commit()
        return "updated" if existing is not None else "inserted"

    def labels(
        self,
        institution_id: Optional[str] = None,
        labeler: Optional[str] = None,
    ) -> list[LabelRecord]:
        clauses, params = [], []
        if institution_id is not None:
            clauses.append("institution_id=?")
            params.append(institution_id)
        if labeler is not None:
            clauses.append("labeler=?")
            params.append(labeler)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM labels {where} ORDER BY repo_id, institution_id, labeler",
                params,
            ).fetchall()
        return [
            LabelRecord(
                repo_id=r["repo_id"],
                institution_id=r["institution_id"],
                label=r["label"],
                labeler=r["labeler"],
                labeled_at=r["labeled_at"],
            )
            for r in rows
        ]

    def effective_labels(self, institution_id: str) -> list[LabelRecord]:
        """One label per repo: the most recent write wins across labelers."""
        best: dict[str, LabelRecord] = {}
        for record in self.labels(institution_id=institution_id):
            current = best.get(record.repo_id)
            if current is None or (record.labeled_at, record.labeler) > (
                current.labeled_at,
                current.labeler,
            ):
                best[record.repo_id] = record
        return [best[rid] for rid in sorted(best)]

    # -------------------------------------------------------------- predictions

    def add_prediction(self, record: Prediction) -> None:
        with self._lock:
            if not self._conn.execute(
                "SELECT 1 FROM repos WHERE repo_id=?", (record.repo_id,)
            ).fetchone():
                raise NotFoundError(f"repo {record.repo_id} not in store")
            produced_at = record.produced_at or _now()
            self._conn.execute(
                "INSERT OR REPLACE INTO predictions(repo_id, institution_id, classifier, "
                "model_tag, probability, explanation, produced_at) VALUES (?,?,?,?,?,?,?)",
                (
                    record.repo_id,
                    record.institution_id,
                    record.classifier,
                    record.model_tag,
                    record.probability,
                    record.explanation,
                    produced_at,
                ),
            )
            self._conn.commit()

    def predictions(
        self,
        institution_id: Optional[str] = None,
        classifier: Optional[str] = None,
        model_tag: Optional[str] = None,
    ) -> list[Prediction]:
        clauses, params = [], []
        if institution_id is not None:
            clauses.append("institution_id=?")
            params.append(institution_id)
        if classifier is not None:
            clauses.append("classifier=?")
            params.append(classifier)
        if model_tag is not None:
            clauses.append("model_tag=?")
            params.append(model_tag)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM predictions {where} "
                "ORDER BY repo_id, institution_id, classifier, model_tag",
                params,
            ).fetchall()
        return [
            Prediction(
                repo_id=r["repo_id"],
                institution_id=r["institution_id"],
                classifier=r["classifier"],
                model_tag=r["model_tag"],
                probability=r["probability"],
                explanation=r["explanation"],
                produced_at=r["produced_at"],
            )
            for r in rows
        ]

    def latest_probability_by_repo(
        self, institution_id: str, classifier: str
    ) -> dict[str, float]:
        """Most recent prediction per repo for (institution, classifier)."""
        best: dict[str, tuple[str, str, float]] = {}
        for p in self.predictions(institution_id=institution_id, classifier=classifier):
            key = (p.produced_at, p.model_tag, p.probability)
            if p.repo_id not in best or key > best[p.repo_id]:
                best[p.repo_id] = key
        return {rid: entry[2] for rid, entry in best.items()}

    # --------------------------------------------------------------- candidates

    def query_candidates(
        self,
        institution_id: str,
        unlabeled_only: bool = False,
        max_probability: Optional[float] = None,
        classifier: Optional[str] = None,
    ) -> list[str]:
        """Repo ids for an institution, filtered for the labeling queue.

        With a classifier filter the result is ordered by ascending probability
        (lowest-confidence first) and only covers repos that have predictions;
        otherwise it is ordered by repo_id.
        """
        if max_probability is not None and classifier is None:
            raise ValueError("max_probability filter requires a classifier")
        with self._lock:
            if not self._known_institution(institution_id):
                raise NotFoundError(f"unknown institution {institution_id!r}")
            candidates = self.repo_ids(institution_id)
            if unlabeled_only:
                labeled = {
                    r["repo_id"]
                    for r in self._conn.execute(
                        "SELECT DISTINCT repo_id FROM labels WHERE institution_id=?",
                        (institution_id,),
                    ).fetchall()
                }
                candidates = [rid for rid in candidates if rid not in labeled]
            if classifier is None:
                return candidates
            probs = self.latest_probability_by_repo(institution_id, classifier)
            scored = [(probs[rid], rid) for rid in candidates if rid in probs]
            if max_probability is not None:
                scored = [(p, rid) for p, rid in scored if p <= max_probability]
            return [rid for _, rid in sorted(scored)]

    # --------------------------------------------------------- embeddings cache

    def cache_embedding(
        self, repo_id: str, model_tag: str, text_hash: str, values: Sequence[float]
    ) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO embedding_cache(repo_id, model_tag, text_hash, dim, vector) "
                "VALUES (?,?,?,?,?)",
                (repo_id, model_tag, text_hash, len(values), json.dumps(list(values))),
            )
            self._conn.commit()

    def cached_embedding(
        self, repo_id: str, model_tag: str, text_hash: str
    ) -> Optional[list[float]]:
        with self._lock:
            row = self._conn.execute(
                "SELECT vector FROM embedding_cache WHERE repo_id=? AND model_tag=? AND text_hash=?",
                (repo_id, model_tag, text_hash),
            ).fetchone()
        return json.loads(row["vector"]) if row else None

    # ------------------------------------------------------------- raw payloads

    def archive_payload(self, endpoint: str, key: str, payload: object) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO raw_payloads(endpoint, key, payload, fetched_at) "
                "VALUES (?,?,?,?)",
                (endpoint, key, json.dumps(payload), _now()),
            )
            self._conn.commit()

    # ------------------------------------------------------------------ exports

    def _export_rows(self, table: str) -> list[dict]:
        if table == "repos":
            rows = []
            for repo in self.iter_repos():
                flags = repo.community
                rows.append(
                    {
                        "repo_id": repo.repo_id,
                        "name": repo.name,
                        "description": repo.description,
                        "homepage": repo.homepage,
                        "topics": list(repo.topics),
                        "primary_language": repo.primary_language,
                        "license_id": repo.license_id,
                        "owner_login": repo.owner_login,
                        "owner_kind": repo.owner_kind,
                        "stars": repo.stars,
                        "forks": repo.forks,
                        "subscribers": repo.subscribers,
                        "release_download_count": repo.release_download_count,
                        "created_at": repo.created_at,
                        "updated_at": repo.updated_at,
                        "github_id": repo.github_id,
                        "has_readme": int(flags.has_readme),
                        "has_license": int(flags.has_license),
                        "has_code_of_conduct": int(flags.has_code_of_conduct),
                        "has_contributing": int(flags.has_contributing),
                        "has_security_policy": int(flags.has_security_policy),
                        "has_issue_template": int(flags.has_issue_template),
                        "has_pr_template": int(flags.has_pr_template),
                        "has_description": int(flags.has_description),
                        "matched_queries": [list(m) for m in repo.matched_queries],
                        "readme_text": repo.readme_text,
                    }
                )
            return rows
        if table == "contributors":
            with self._lock:
                rows = self._conn.execute(
                    "SELECT * FROM contributors ORDER BY repo_id, rank"
                ).fetchall()
            return [
                {
                    "repo_id": r["repo_id"],
                    "username": r["username"],
                    "rank": r["rank"],
                    "name": r["name"],
                    "bio": r["bio"],
                    "location": r["location"],
                    "company": r["company"],
                    "email": r["email"],
                    "twitter": r["twitter"],
                    "organizations": json.loads(r["organizations"]),
                }
                for r in rows
            ]
        if table == "orgs":
            with self._lock:
                rows = self._conn.execute("SELECT * FROM orgs ORDER BY login").fetchall()
            return [{col: r[col] for col in EXPORT_COLUMNS["orgs"]} for r in rows]
        if table == "predictions":
            return [
                {
                    "repo_id": p.repo_id,
                    "institution_id": p.institution_id,
                    "classifier": p.classifier,
                    "model_tag": p.model_tag,
                    "probability": p.probability,
                    "explanation": p.explanation,
                    "produced_at": p.produced_at,
                }
                for p in self.predictions()
            ]
        if table == "labels":
            return [
                {
                    "repo_id": l.repo_id,
                    "institution_id": l.institution_id,
                    "labeler": l.labeler,
                    "label": l.label,
                    "labeled_at": l.labeled_at,
                }
                for l in self.labels()
            ]
        raise ValueError(f"unknown table {table!r}; expected one of {EXPORT_TABLES}")

    def export_table(self, table: str, fmt: str, dest: str | Path) -> int:
        """Write one table as CSV (RFC 4180) or JSON lines; returns rows written."""
        if fmt not in ("csv", "jsonl"):
            raise ValueError(f"unknown export format {fmt!r}")
        rows = self._export_rows(table)
        columns = EXPORT_COLUMNS[table]
        try:
            out = io.StringIO()
            if fmt == "csv":
                writer = csv.writer(out)
                writer.writerow(columns)
                for row in rows:
                    writer.writerow(
                        [
                            json.dumps(row[col])
                            if isinstance(row[col], list)
                            else row[col]
                            for col in columns
                        ]
                    )
            else:
                for row in rows:
                    out.write(json.dumps({col: row[col] for col in columns}))
                    out.write("\n")
            Path(dest).write_text(out.getvalue(), encoding="utf-8", newline="")
        except OSError as exc:
            raise StoreError(f"cannot write export to {dest}: {exc}") from exc
        return len(rows)

    # ------------------------------------------------------------------- counts

    def label_summary(self, institution_id: str) -> dict:
        """Labeled/unlabeled and per-class counts for one institution."""
        with self._lock:
            retrieved = self.unique_repo_count(institution_id)
            rows = self._conn.execute(
                "SELECT repo_id, MAX(label) label FROM labels WHERE institution_id=? "
                "GROUP BY repo_id",
                (institution_id,),
            ).fetchall()
        labeled = len(rows)
        positives = sum(1 for r in rows if r["label"] == 1)
        return {
            "labeled_count": labeled,
            "unlabeled_count": max(retrieved - labeled, 0),
            "positive_count": positives,
            "negative_count": labeled - positives,
        }
