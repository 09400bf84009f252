"""GitHub-compatible REST ingestion: search, enrichment, contributors, orgs.

One shared RateBudget arbitrates all requests (workers may run concurrently);
retries use exponential backoff and honor server reset headers. Raw payloads
are handed to the caller for archiving so re-parsing never costs quota.
"""

from __future__ import annotations

import base64
import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Callable, Optional, Sequence

import requests

from .errors import NetworkError, RateLimitError, ServiceError
from .model import CommunityFlags, ContributorRecord, OrgRecord, RepoRecord
from .queries import SearchQuery

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.github.com"
PAGE_SIZE = 100
SEARCH_RESULT_CAP = 1000
TOKEN_ENV_VAR = "GITHUB_TOKEN"

_COMMUNITY_FILE_FLAGS = {
    "license": "has_license",
    "code_of_conduct": "has_code_of_conduct",
    "contributing": "has_contributing",
    "security_policy": "has_security_policy",
    "issue_template": "has_issue_template",
    "pull_request_template": "has_pr_template",
}


class RateBudget:
    """Thread-safe request arbiter: per-window quota plus a minimum spacing.

    `remaining` counts requests left in the current window; when it reaches
    zero the next acquire sleeps until `reset_at` and the window refills to
    `limit`. Clock and sleep are injectable for tests.
    """

    def __init__(
        self,
        remaining: int,
        reset_at: float = 0.0,
        min_interval: float = 0.0,
        limit: Optional[int] = None,
        clock: Callable[[], float] = time.time,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if remaining < 0:
            raise ValueError("remaining must be >= 0")
        self.remaining = remaining
        self.reset_at = reset_at
        self.min_interval = min_interval
        self.limit = limit if limit is not None else max(remaining, 1)
        self._clock = clock
        self._sleep = sleep
        self._last_request: Optional[float] = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        """Block until a request may be issued, then consume one unit."""
        with self._lock:
            now = self._clock()
            if self.remaining <= 0:
                wait = max(self.reset_at - now, 0.0)
                if wait > 0:
                    logger.info("rate budget exhausted; sleeping %.1fs until reset", wait)
                    self._sleep(wait)
                now = self._clock()
                self.remaining = self.limit
            if self._last_request is not None:
                gap = self.min_interval - (now - self._last_request)
                if gap > 0:
                    self._sleep(gap)
                    now = self._clock()
            self._last_request = now
            self.remaining -= 1

    def refresh(self, remaining: Optional[int], reset_at: Optional[float]) -> None:
        """Adopt server-reported quota state (from rate-limit headers)."""
        with self._lock:
            if remaining is not None:
                self.remaining = max(int(remaining), 0)
            if reset_at is not None:
                self.reset_at = float(reset_at)


@dataclass
class SearchOutcome:
    """Raw search summaries for one query plus cap bookkeeping."""

    query: SearchQuery
    summaries: list[dict] = field(default_factory=list)
    total_count: int = 0
    truncated: bool = False


class GitHubClient:
    """Synchronous client for the GitHub-compatible endpoints the pipeline uses."""

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        token: Optional[str] = None,
        budget: Optional[RateBudget] = None,
        session: Optional[requests.Session] = None,
        max_retries: int = 5,
        backoff_base: float = 2.0,
        sleep: Callable[[float], None] = time.sleep,
        run_log=None,
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self._headers = {"Accept": "application/vnd.github+json"}
        if token:
            self._headers["Authorization"] = f"Bearer {token}"
        self.budget = budget or RateBudget(remaining=5000, min_interval=0.0)
        self._session = session or requests.Session()
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._sleep = sleep
        self._run_log = run_log
        self._timeout = timeout

    # ----------------------------------------------------------------- plumbing

    def _log(self, event: str, **fields) -> None:
        if self._run_log is not None:
            self._run_log.event(event, **fields)

    def _get(self, path: str, params: Optional[dict] = None) -> requests.Response:
        """GET with budget accounting and backoff; 404/422 pass through."""
        url = f"{self.base_url}{path}"
        last_error: Optional[Exception] = None
        for attempt in range(self._max_retries):
            self.budget.acquire()
            try:
                response = self._session.get(
                    url, params=params, headers=self._headers, timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                self._log("request_error", path=path, attempt=attempt, error=str(exc))
                self._sleep(self._backoff_base * (2**attempt))
                continue
            self._log("request", path=path, status=response.status_code)
            remaining = response.headers.get("X-RateLimit-Remaining")
            reset_at = response.headers.get("X-RateLimit-Reset")
            self.budget.refresh(
                int(remaining) if remaining is not None else None,
                float(reset_at) if reset_at is not None else None,
            )
            if response.status_code in (403, 429):
                retry_after = response.headers.get("Retry-After")
                if retry_after is not None:
                    wait = float(retry_after)
                elif reset_at is not None:
                    wait = max(float(reset_at) - time.time(), 0.0)
                else:
                    wait = self._backoff_base * (2**attempt)
                last_error = RateLimitError(f"{response.status_code} on {path}")
                self._sleep(wait)
                continue
            if response.status_code >= 500:
                last_error = ServiceError(f"{response.status_code} on {path}")
                self._sleep(self._backoff_base * (2**attempt))
                continue
            return response
        if isinstance(last_error, RateLimitError):
            raise RateLimitError(f"rate limited after {self._max_retries} attempts: {path}")
        raise NetworkError(f"request failed after {self._max_retries} attempts: {last_error}")

    def _get_json(self, path: str, params: Optional[dict] = None):
        response = self._get(path, params)
        if response.status_code == 404:
            return None
        if response.status_code != 200:
            raise ServiceError(f"{response.status_code} on {path}: {response.text[:200]}")
        return response.json()

    # ------------------------------------------------------------------- search

    def run_search(self, query: SearchQuery) -> SearchOutcome:
        """Page through one search until exhaustion or the service's result cap.

        Every summary is tagged with the query's provenance triple under the
        "_provenance" key. A 422 past the cap (or a total over the cap) marks
        the outcome truncated.
        """
        outcome = SearchOutcome(query=query)
        page = 1
        while True:
            response = self._get(
                "/search/repositories",
                params={"q": query.rendered, "per_page": PAGE_SIZE, "page": page},
            )
            if response.status_code == 422:
                outcome.truncated = True
                self._log(
                    "search_truncated",
                    query=query.rendered,
                    collected=len(outcome.summaries),
                )
                logger.warning(
                    "search %r truncated at %d results (service cap)",
                    query.rendered,
                    len(outcome.summaries),
                )
                break
            if response.status_code != 200:
                raise ServiceError(
                    f"search returned {response.status_code}: {response.text[:200]}"
                )
            payload = response.json()
            outcome.total_count = int(payload.get("total_count", 0))
            items = payload.get("items", [])
            for item in items:
                item = dict(item)
                item["_provenance"] = query.provenance()
                outcome.summaries.append(item)
            if not items or len(outcome.summaries) >= outcome.total_count:
                break
            if len(outcome.summaries) >= SEARCH_RESULT_CAP:
                if outcome.total_count > SEARCH_RESULT_CAP:
                    outcome.truncated = True
                    self._log(
                        "search_truncated",
                        query=query.rendered,
                        collected=len(outcome.summaries),
                        total=outcome.total_count,
                    )
                    logger.warning(
                        "search %r matches %d repos; capped at %d",
                        query.rendered,
                        outcome.total_count,
                        SEARCH_RESULT_CAP,
                    )
                break
            page += 1
        return outcome

    def run_search_sliced(
        self,
        query: SearchQuery,
        since: date = date(2008, 1, 1),
        until: Optional[date] = None,
    ) -> list[SearchOutcome]:
        """Split a capped query into created-date windows until none truncate.

        Windows of a single day that still overflow are kept truncated (no
        finer decomposition is available over this API).
        """
        until = until or date.today()
        windowed = SearchQuery(
            query.institution_id,
            query.keyword,
            query.attribute,
            f"{query.rendered} created:{since.isoformat()}..{until.isoformat()}",
        )
        outcome = self.run_search(windowed)
        if not outcome.truncated or since == until:
            outcome.query = query  # provenance stays on the logical query
            for item in outcome.summaries:
                item["_provenance"] = query.provenance()
            return [outcome]
        midpoint = since + (until - since) / 2
        left = self.run_search_sliced(query, since, midpoint)
        right = self.run_search_sliced(query, midpoint + timedelta(days=1), until)
        return left + right

    # --------------------------------------------------------------- enrichment

    def enrich_repository(self, summary: dict) -> Optional[RepoRecord]:
        """Fill in README, community flags, subscriber and download counts.

        Returns None (with a log entry) when the repository has vanished.
        Missing README or community files are flags-off, never errors.
        """
        owner = summary.get("owner", {}).get("login") or summary["full_name"].split("/")[0]
        name = summary.get("name") or summary["full_name"].split("/")[1]
        repo_path = f"/repos/{owner}/{name}"

        detail = self._get_json(repo_path)
        if detail is None:
            logger.warning("repo %s/%s disappeared; skipping", owner, name)
            self._log("repo_gone", repo=f"{owner}/{name}")
            return None

        readme_text = ""
        readme_payload = self._get_json(f"{repo_path}/readme")
        if readme_payload is not None:
            content = readme_payload.get("content", "")
            try:
                readme_text = base64.b64decode(content).decode("utf-8")
            except (ValueError, UnicodeDecodeError):
                readme_text = ""  # non-text README: flag stays false

        community_payload = self._get_json(f"{repo_path}/community/profile") or {}
        files = community_payload.get("files") or {}
        flag_values = {
            flag: bool(files.get(key)) for key, flag in _COMMUNITY_FILE_FLAGS.items()
        }

        releases = self._get_json(f"{repo_path}/releases") or []
        downloads = sum(
            int(asset.get("download_count", 0))
            for release in releases
            for asset in release.get("assets", [])
        )

        description = detail.get("description") or ""
        license_info = detail.get("license") or {}
        license_id = license_info.get("spdx_id") or ""
        if not license_id:
            license_id = "NOASSERTION" if flag_values["has_license"] else "NONE"
        owner_kind = (
            "organization"
            if (detail.get("owner", {}).get("type", "User").lower() == "organization")
            else "user"
        )

        flags = CommunityFlags(
            has_readme=bool(readme_text),
            has_description=bool(description),
            **flag_values,
        )
        provenance = summary.get("_provenance")
        return RepoRecord(
            repo_id=detail["full_name"],
            name=detail.get("name") or name,
            description=description,
            homepage=detail.get("homepage") or "",
            readme_text=readme_text,
            topics=tuple(detail.get("topics") or ()),
            primary_language=detail.get("language") or "",
            license_id=license_id,
            owner_login=detail.get("owner", {}).get("login", owner),
            owner_kind=owner_kind,
            stars=int(detail.get("stargazers_count", 0)),
            forks=int(detail.get("forks_count", 0)),
            subscribers=int(detail.get("subscribers_count", 0)),
            release_download_count=downloads,
            created_at=detail.get("created_at") or "",
            updated_at=detail.get("updated_at") or "",
            github_id=int(detail.get("id", 0)),
            community=flags,
            matched_queries=(provenance,) if provenance else (),
        )

    # ------------------------------------------------------------- contributors

    def fetch_contributors(self, repo_id: str, top_n: int = 2) -> list[ContributorRecord]:
        """Contributors in commit-count order; full profiles for the top N."""
        owner, name = repo_id.split("/", 1)
        listing = self._get_json(f"/repos/{owner}/{name}/contributors") or []
        if not listing:
            logger.info("repo %s has no contributors", repo_id)
            return []
        records: list[ContributorRecord] = []
        for rank, entry in enumerate(listing, start=1):
            username = entry.get("login", "")
            if not username:
                continue
            if rank <= top_n:
                profile = self._get_json(f"/users/{username}") or {}
                orgs = self._get_json(f"/users/{username}/orgs") or []
                records.append(
                    ContributorRecord(
                        repo_id=repo_id,
                        username=username,
                        rank=rank,
                        name=profile.get("name") or "",
                        bio=profile.get("bio") or "",
                        location=profile.get("location") or "",
                        company=profile.get("company") or "",
                        email=profile.get("email") or "",
                        twitter=profile.get("twitter_username") or "",
                        organizations=tuple(
                            o.get("login", "") for o in orgs if o.get("login")
                        ),
                    )
                )
            else:
                records.append(
                    ContributorRecord(repo_id=repo_id, username=username, rank=rank)
                )
        return records

    # --------------------------------------------------------------------- orgs

    def fetch_organization(self, owner_login: str) -> Optional[OrgRecord]:
        """OrgRecord iff the account is an organization; None otherwise."""
        payload = self._get_json(f"/users/{owner_login}")
        if payload is None:
            logger.warning("owner %s not found; no org record", owner_login)
            return None
        if payload.get("type", "User").lower() != "organization":
            return None
        return OrgRecord(
            login=payload.get("login", owner_login),
            name=payload.get("name") or "",
            company=payload.get("company") or "",
            location=payload.get("location") or "",
            description=payload.get("description") or "",
            email=payload.get("email") or "",
            url=payload.get("blog") or "",
            created_at=payload.get("created_at") or "",
        )
