"""Orchestration glue between the ingest client, the classifiers, and the store.

The CLI subcommands are thin wrappers around these functions so tests can
drive the same code paths directly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .embedding import EmbeddingClient, embed
from .errors import FormatError
from .github import GitHubClient, SearchOutcome
from .llm import ChatClient, ModelParams, build_prompt, classify_llm
from .model import InstitutionProfile, Prediction, RepoRecord
from .queries import SearchQuery, generate_queries
from .sbc import ScoreWeightTable, score_repository
from .store import Store
from .svm import SvmModel, predict_svm
from .textprep import assemble_text

logger = logging.getLogger(__name__)


@dataclass
class DiscoverySummary:
    institution_id: str
    query_counts: list[tuple[str, int]] = field(default_factory=list)
    truncated_queries: list[str] = field(default_factory=list)
    raw_matches: int = 0
    unique_repos: int = 0
    skipped: int = 0


def discover(
    client: GitHubClient,
    store: Store,
    profile: InstitutionProfile,
    date_slicing: bool = False,
    parallelism: int = 4,
) -> DiscoverySummary:
    """Run the full discovery phase for one institution.

    Searches every generated query, dedups summaries per repo, enriches each
    unique repo once (concurrently under the shared budget), and upserts.
    """
    store.register_institutions([profile])
    summary = DiscoverySummary(institution_id=profile.id)
    outcomes: list[SearchOutcome] = []
    for query in generate_queries(profile):
        if date_slicing:
            sliced = client.run_search_sliced(query)
            merged = SearchOutcome(query=query)
            for part in sliced:
                merged.summaries.extend(part.summaries)
                merged.total_count += part.total_count
                merged.truncated = merged.truncated or part.truncated
            outcome = merged
        else:
            outcome = client.run_search(query)
        outcomes.append(outcome)
        summary.query_counts.append((query.rendered, len(outcome.summaries)))
        if outcome.truncated:
            summary.truncated_queries.append(query.rendered)

    by_repo: dict[str, dict] = {}
    provenance: dict[str, set[tuple[str, str, str]]] = {}
    for outcome in outcomes:
        for item in outcome.summaries:
            full_name = item["full_name"]
            by_repo.setdefault(full_name, item)
            provenance.setdefault(full_name, set()).add(tuple(item["_provenance"]))

    def enrich_one(full_name: str) -> Optional[RepoRecord]:
        record = client.enrich_repository(by_repo[full_name])
        if record is None:
            return None
        return record.with_matches(sorted(provenance[full_name]))

    ordered = sorted(by_repo)
    with ThreadPoolExecutor(max_workers=max(parallelism, 1)) as pool:
        enriched = list(pool.map(enrich_one, ordered))
    for full_name, record in zip(ordered, enriched):
        if record is None:
            summary.skipped += 1
            continue
        store.archive_payload("search_summary", full_name, by_repo[full_name])
        store.upsert_repo(record)

    summary.raw_matches = store.raw_match_count(profile.id)
    summary.unique_repos = store.unique_repo_count(profile.id)
    return summary


def enrich_contributors(
    client: GitHubClient,
    store: Store,
    top_n: int = 2,
    limit: Optional[int] = None,
) -> tuple[int, int]:
    """Fetch contributor lists for repos that still lack them; resumable.

    Returns (processed, failed). Per-repo failures log and continue.
    """
    pending = store.repos_pending_contributors()
    if limit is not None:
        pending = pending[:limit]
    processed = failed = 0
    for repo_id in pending:
        try:
            records = client.fetch_contributors(repo_id, top_n=top_n)
            store.upsert_contributors(repo_id, records)
            processed += 1
        except Exception as exc:
            failed += 1
            logger.warning("contributor fetch failed for %s: %s", repo_id, exc)
    return processed, failed


def enrich_orgs(
    client: GitHubClient,
    store: Store,
    limit: Optional[int] = None,
) -> tuple[int, int]:
    """Fetch owner-org records for organization-owned repos; resumable."""
    pending = store.repos_pending_org()
    if limit is not None:
        pending = pending[:limit]
    processed = orgs_found = 0
    for repo_id in pending:
        repo = store.get_repo(repo_id)
        if repo is None:
            continue
        if repo.owner_kind == "organization":
            org = client.fetch_organization(repo.owner_login)
            if org is not None:
                store.upsert_org(org)
                orgs_found += 1
        store.mark_org_fetched(repo_id)
        processed += 1
    return processed, orgs_found


def classify_sbc(
    store: Store,
    profile: InstitutionProfile,
    weights: Optional[ScoreWeightTable] = None,
    limit: Optional[int] = None,
    model_tag: str = "table-default",
) -> list[Prediction]:
    """Score every discovered repo for the institution and persist predictions."""
    repo_ids = store.repo_ids(profile.id)
    if limit is not None:
        repo_ids = repo_ids[:limit]
    predictions = []
    for repo_id in repo_ids:
        repo = store.get_repo(repo_id)
        if repo is None:
            continue
        org = store.org_for_repo(repo_id)
        top2 = store.contributors_for(repo_id, max_rank=2)
        report = score_repository(repo, org, top2, profile, weights)
        prediction = Prediction(
            repo_id=repo_id,
            institution_id=profile.id,
            classifier="sbc",
            model_tag=model_tag,
            probability=report.total,
        )
        store.add_prediction(prediction)
        predictions.append(prediction)
    return predictions


def svm_scores(
    store: Store,
    model: SvmModel,
    repo_ids: Sequence[str],
    embedding_client: EmbeddingClient,
) -> dict[str, float]:
    """Embed (cache-first) and score the given repos with a trained model."""
    assembled = []
    for repo_id in repo_ids:
        repo = store.get_repo(repo_id)
        if repo is None:
            continue
        org = store.org_for_repo(repo_id)
        top2 = store.contributors_for(repo_id, max_rank=2)
        assembled.append(assemble_text(repo, org, top2))
    if not assembled:
        return {}
    vectors = embed(assembled, embedding_client, store)
    return {v.repo_id: predict_svm(model, v) for v in vectors}


def classify_svm(
    store: Store,
    profile: InstitutionProfile,
    model: SvmModel,
    embedding_client: EmbeddingClient,
    limit: Optional[int] = None,
) -> list[Prediction]:
    repo_ids = store.repo_ids(profile.id)
    if limit is not None:
        repo_ids = repo_ids[:limit]
    scores = svm_scores(store, model, repo_ids, embedding_client)
    predictions = []
    for repo_id, probability in sorted(scores.items()):
        prediction = Prediction(
            repo_id=repo_id,
            institution_id=profile.id,
            classifier="svm",
            model_tag=model.model_tag,
            probability=probability,
        )
        store.add_prediction(prediction)
        predictions.append(prediction)
    return predictions


def classify_with_llm(
    store: Store,
    profile: InstitutionProfile,
    chat_client: ChatClient,
    params: ModelParams,
    limit: Optional[int] = None,
    run_log=None,
) -> tuple[list[Prediction], list[str]]:
    """Classify repos via the chat endpoint; returns (predictions, needs_review).

    Repos whose responses never parse carry no fabricated probability; they are
    flagged for review and the run continues.
    """
    repo_ids = store.repo_ids(profile.id)
    if limit is not None:
        repo_ids = repo_ids[:limit]
    predictions: list[Prediction] = []
    needs_review: list[str] = []
    for repo_id in repo_ids:
        repo = store.get_repo(repo_id)
        if repo is None:
            continue
        org = store.org_for_repo(repo_id)
        top2 = store.contributors_for(repo_id, max_rank=2)
        prompt = build_prompt(repo, org, top2, profile, params)
        try:
            verdict = classify_llm(prompt, chat_client)
        except FormatError as exc:
            needs_review.append(repo_id)
            if run_log is not None:
                run_log.event(
                    "needs_review", repo_id=repo_id, reason=str(exc)
                )
            continue
        prediction = Prediction(
            repo_id=repo_id,
            institution_id=profile.id,
            classifier="llm",
            model_tag=params.tag,
            probability=verdict.probability,
            explanation=verdict.explanation,
        )
        store.add_prediction(prediction)
        predictions.append(prediction)
    return predictions, needs_review
