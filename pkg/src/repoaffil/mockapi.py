"""In-process HTTP doubles for the forge and inference services.

MockGitHubServer speaks the subset of the GitHub REST API the pipeline uses
(including the 1,000-result search cap and 422 overflow); MockInferenceServer
speaks the /v1/embeddings and /v1/chat/completions shapes deterministically.
build_corpus plants a synthetic repository population with known affiliation
ground truth so the whole pipeline runs offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import random
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence
from urllib.parse import parse_qs, urlparse

from .model import InstitutionProfile

SEARCH_CAP = 1000
EMBEDDING_DIM = 128
EMBED_MODEL = "mock-embed-1"
CHAT_MODEL = "mock-chat-1"


@dataclass
class MockUser:
    login: str
    kind: str = "User"  # "User" | "Organization"
    name: str = ""
    bio: str = ""
    location: str = ""
    company: str = ""
    email: str = ""
    twitter: str = ""
    blog: str = ""
    description: str = ""
    created_at: str = "2015-01-01T00:00:00Z"
    organizations: tuple[str, ...] = ()


@dataclass
class MockRepo:
    full_name: str
    github_id: int
    owner: str
    description: str = ""
    homepage: str = ""
    readme: Optional[str] = None
    topics: tuple[str, ...] = ()
    language: str = ""
    license_spdx: Optional[str] = None
    stars: int = 0
    forks: int = 0
    subscribers: int = 0
    created_at: str = "2018-01-01T00:00:00Z"
    updated_at: str = "2021-01-01T00:00:00Z"
    # community files beyond README/license
    has_code_of_conduct: bool = False
    has_contributing: bool = False
    has_security_policy: bool = False
    has_issue_template: bool = False
    has_pr_template: bool = False
    release_downloads: tuple[int, ...] = ()
    contributors: tuple[tuple[str, int], ...] = ()  # (login, commit count)

    @property
    def name(self) -> str:
        return self.full_name.split("/", 1)[1]


@dataclass
class MockCorpus:
    profiles: list[InstitutionProfile]
    repos: dict[str, MockRepo] = field(default_factory=dict)
    users: dict[str, MockUser] = field(default_factory=dict)
    # institution_id -> repo_id -> 0/1 planted ground truth
    truth: dict[str, dict[str, int]] = field(default_factory=dict)

    def add_repo(self, repo: MockRepo) -> None:
        self.repos[repo.full_name] = repo

    def add_user(self, user: MockUser) -> None:
        self.users[user.login] = user

    def profile_by_domain(self, domain: str) -> Optional[InstitutionProfile]:
        for p in self.profiles:
            if p.domain == domain:
                return p
        return None


# ------------------------------------------------------------------ generation

_LANGS = ("Python", "Python", "JavaScript", "Java", "C++", "R", "TypeScript", "Go", "")
_LICENSES = ("MIT", "MIT", "Apache-2.0", "GPL-3.0", None, None, None, None)

_POS_DESCRIPTIONS = (
    "Simulation toolkit developed at the {name} genomics research lab",
    "Official {alt} course materials for the systems programming class",
    "Research software maintained by a {alt} faculty group",
    "Data pipeline built by graduate students at {alt}",
    "{acronym} open source program office automation tools",
)
_POS_READMES = (
    "This project was developed and is maintained by the research group in the "
    "computer science department at {name}. Students and faculty contribute "
    "regularly. Contact the lab at research@{domain} for questions.",
    "Official repository of the {alt} laboratory. The software supports ongoing "
    "faculty research projects and is maintained by university staff.",
    "Course repository for lectures taught at {alt}. Assignments, notes, and "
    "starter code are published here by the teaching faculty each quarter.",
)
_NEG_DESCRIPTIONS = (
    "Awesome curated list of security resources mentioning {alt} and others",
    "Unofficial mirror of lecture slides collected from {alt} and MIT",
    "Aggregated benchmark datasets citing papers from {name}",
    "Personal dotfiles; includes a colorscheme named after {alt}",
    "Collection of interview questions compiled from many universities including {acronym}",
)
_NEG_READMES = (
    "An awesome list aggregating resources, links, and tutorials collected from "
    "many universities including {alt}, MIT, and Stanford. Nothing here is an "
    "official product of any school; it is a community curated collection.",
    "Mirror of publicly available lecture slides. Credits go to the original "
    "authors; this archive simply aggregates files found online citing {alt}.",
    "Benchmark collection referencing datasets published in papers from {name} "
    "and elsewhere. Maintained by an independent hobbyist for convenience.",
)
_FIRST = ("alex", "sam", "jordan", "taylor", "casey", "robin", "drew", "quinn")
_LAST = ("rivera", "chen", "patel", "okafor", "garcia", "kim", "novak", "alvarez")


def _iso(year: int, month: int, day: int) -> str:
    return f"{year:04d}-{month:02d}-{day:02d}T00:00:00Z"


def build_corpus(
    profiles: Sequence[InstitutionProfile],
    n_repos: int = 300,
    seed: int = 7,
    positive_fraction: float = 0.5,
) -> MockCorpus:
    """Plant a synthetic population with known affiliation per institution.

    Positives carry genuine affiliation signals (university orgs, contributor
    emails at the domain, lab/course language); negatives mention the same
    keywords incidentally (lists, mirrors, aggregations), which is exactly the
    noise the classifiers must reject.
    """
    rng = random.Random(seed)
    corpus = MockCorpus(profiles=list(profiles))
    for p in profiles:
        corpus.truth[p.id] = {}

    # user pool: affiliated people, unaffiliated people, and orgs
    for p in profiles:
        corpus.add_user(
            MockUser(
                login=f"{p.id}-labs",
                kind="Organization",
                name=f"{p.name} Labs",
                email=f"ospo@{p.domain}",
                blog=f"https://www.{p.domain}",
                description=f"Open source projects from {p.name}",
                created_at=_iso(2014, 3, 1),
            )
        )
        for i in range(8):
            first, last = rng.choice(_FIRST), rng.choice(_LAST)
            corpus.add_user(
                MockUser(
                    login=f"{p.id}-prof{i}",
                    name=f"{first.title()} {last.title()}",
                    bio=f"Faculty member at {p.alternates[0]}",
                    location="California, USA",
                    company=p.acronym,
                    email=f"{first}.{last}@{p.domain}" if i % 2 == 0 else "",
                    organizations=(f"{p.id}-labs",),
                )
            )
    for i in range(40):
        first, last = rng.choice(_FIRST), rng.choice(_LAST)
        corpus.add_user(
            MockUser(
                login=f"dev{i}",
                name=f"{first.title()} {last.title()}",
                bio=rng.choice(
                    ("Software tinkerer", "Open source fan", "Backend engineer", "")
                ),
                email=f"{first}{i}@example.com" if i % 3 == 0 else "",
            )
        )
    corpus.add_user(
        MockUser(
            login="acme-oss",
            kind="Organization",
            name="Acme OSS",
            email="oss@acme.example",
            blog="https://acme.example",
            description="Random community mirrors",
        )
    )

    github_id = 1000
    per_institution = max(len(profiles), 1)
    for idx in range(n_repos):
        p = profiles[idx % per_institution]
        positive = rng.random() < positive_fraction
        slug = f"repo{idx:04d}"
        created = _iso(rng.randint(2012, 2023), rng.randint(1, 12), rng.randint(1, 28))
        updated = _iso(2024, rng.randint(1, 12), rng.randint(1, 28))
        language = rng.choice(_LANGS)
        license_spdx = rng.choice(_LICENSES)
        fmt = {
            "name": p.name,
            "acronym": p.acronym,
            "domain": p.domain,
            "alt": p.alternates[0],
        }

        if positive:
            template_kind = rng.randrange(3)
            description = rng.choice(_POS_DESCRIPTIONS).format(**fmt)
            readme = rng.choice(_POS_READMES).format(**fmt)
            if template_kind == 0:
                owner = f"{p.id}-labs"
                profs = rng.sample(range(8), 2)
                contributors = tuple(
                    (f"{p.id}-prof{prof}", 50 - 10 * j) for j, prof in enumerate(profs)
                )
                homepage = f"https://{p.domain}/projects/{slug}"
            elif template_kind == 1:
                owner = f"{p.id}-prof{rng.randrange(8)}"
                contributors = ((owner, 80), (f"dev{rng.randrange(40)}", 12))
                homepage = ""
            else:
                owner = f"{p.id}-prof{rng.randrange(8)}"
                contributors = ((owner, 30),)
                homepage = f"https://courses.{p.domain}/{slug}"
            topics = ("research", p.acronym.lower())
        else:
            description = rng.choice(_NEG_DESCRIPTIONS).format(**fmt)
            readme = rng.choice(_NEG_READMES).format(**fmt)
            owner = rng.choice(("acme-oss", f"dev{rng.randrange(40)}"))
            devs = rng.sample(range(40), rng.randint(1, 3))
            contributors = tuple(
                (f"dev{d}", 40 - 10 * j) for j, d in enumerate(devs)
            )
            homepage = "" if rng.random() < 0.8 else "https://blog.example.org"
            topics = ("awesome", "resources") if rng.random() < 0.5 else ()

        repo = MockRepo(
            full_name=f"{owner}/{slug}",
            github_id=github_id,
            owner=owner,
            description=description,
            homepage=homepage,
            readme=readme if rng.random() < 0.95 else None,
            topics=topics,
            language=language,
            license_spdx=license_spdx,
            stars=rng.randrange(500),
            forks=rng.randrange(80),
            subscribers=rng.randrange(50),
            created_at=created,
            updated_at=updated,
            has_code_of_conduct=rng.random() < 0.05,
            has_contributing=rng.random() < 0.08,
            has_security_policy=rng.random() < 0.02,
            has_issue_template=rng.random() < 0.06,
            has_pr_template=rng.random() < 0.04,
            release_downloads=tuple(
                rng.randrange(2000) for _ in range(rng.randint(0, 2))
            )
            if rng.random() < 0.25
            else (),
            contributors=contributors,
        )
        github_id += 1
        corpus.add_repo(repo)
        corpus.truth[p.id][repo.full_name] = 1 if positive else 0
    return corpus


# ----------------------------------------------------------- deterministic ML


def deterministic_embedding(text: str, dim: int = EMBEDDING_DIM) -> list[float]:
    """Hashed bag-of-words embedding: stable across processes and platforms."""
    vec = [0.0] * dim
    for token in re.findall(r"[a-z0-9]+", text.lower()):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        idx = digest[0] % dim
        sign = 1.0 if digest[1] % 2 == 0 else -1.0
        vec[idx] += sign
    norm = math.sqrt(sum(v * v for v in vec)) or 1.0
    return [v / norm for v in vec]


_FULL_NAME_RE = re.compile(r"^repository full_name: (\S+)$", re.MULTILINE)
_DOMAIN_RE = re.compile(r"^University domain: (\S+)$", re.MULTILINE)


def deterministic_verdict(corpus: MockCorpus, prompt_text: str) -> tuple[float, str]:
    """Ground-truth-driven verdict with a stable per-repo jitter."""
    full_name_m = _FULL_NAME_RE.search(prompt_text)
    domain_m = _DOMAIN_RE.search(prompt_text)
    if not full_name_m or not domain_m:
        return 0.5, "Insufficient repository information to judge affiliation."
    repo_id = full_name_m.group(1)
    profile = corpus.profile_by_domain(domain_m.group(1))
    if profile is None or repo_id not in corpus.truth.get(profile.id, {}):
        return 0.5, "Repository is not recognizable from the provided metadata."
    jitter = (
        int.from_bytes(hashlib.sha256(repo_id.encode()).digest()[:2], "big") % 100
    ) / 1000.0
    if corpus.truth[profile.id][repo_id] == 1:
        return round(0.85 + jitter, 2), (
            "Repository metadata shows direct development and maintenance ties "
            "to the university."
        )
    return round(0.02 + jitter, 2), (
        "Keyword mentions appear incidental; no ownership or contributor "
        "affiliation evidence."
    )


# ------------------------------------------------------------------- servers


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # one TCP segment per response: avoids Nagle/delayed-ACK stalls on loopback
    wbufsize = 1 << 16
    disable_nagle_algorithm = True

    def log_message(self, fmt, *args):  # noqa: A003 - silence request logging
        pass

    def _reply(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("X-RateLimit-Remaining", "4999")
        self.send_header("X-RateLimit-Reset", str(int(time.time()) + 3600))
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        return json.loads(raw or b"{}")

    def do_GET(self):  # noqa: N802 - http.server API
        self.server.dispatch(self, "GET")  # type: ignore[attr-defined]

    def do_POST(self):  # noqa: N802
        self.server.dispatch(self, "POST")  # type: ignore[attr-defined]


class _BaseMockServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self):
        super().__init__(("127.0.0.1", 0), _Handler)
        self._thread: Optional[threading.Thread] = None
        self._counter_lock = threading.Lock()
        self.request_counts: dict[str, int] = {}
        self._scripted: dict[str, list[int]] = {}

    # -- lifecycle

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "_BaseMockServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # -- instrumentation

    def _count(self, key: str) -> None:
        with self._counter_lock:
            self.request_counts[key] = self.request_counts.get(key, 0) + 1

    def count_matching(self, substring: str) -> int:
        with self._counter_lock:
            return sum(v for k, v in self.request_counts.items() if substring in k)

    def script_statuses(self, path_substring: str, statuses: Sequence[int]) -> None:
        """Force the next requests matching the path to return these statuses."""
        with self._counter_lock:
            self._scripted[path_substring] = list(statuses)

    def _scripted_status(self, path: str) -> Optional[int]:
        with self._counter_lock:
            for fragment, statuses in self._scripted.items():
                if fragment in path and statuses:
                    return statuses.pop(0)
        return None

    def dispatch(self, handler: _Handler, method: str) -> None:
        parsed = urlparse(handler.path)
        self._count(parsed.path)
        forced = self._scripted_status(parsed.path)
        if forced is not None:
            handler._reply(forced, {"message": f"scripted {forced}"})
            return
        try:
            self.route(handler, method, parsed.path, parse_qs(parsed.query))
        except BrokenPipeError:
            pass
        except Exception as exc:  # pragma: no cover - mock-internal failure
            handler._reply(500, {"message": f"mock failure: {exc}"})

    def route(self, handler, method, path, query):  # pragma: no cover - abstract
        raise NotImplementedError


class MockGitHubServer(_BaseMockServer):
    """Serves the corpus over the GitHub-compatible REST surface."""

    def __init__(self, corpus: MockCorpus):
        super().__init__()
        self.corpus = corpus

    # -- payload shapes

    def _owner_payload(self, login: str) -> dict:
        user = self.corpus.users.get(login)
        kind = user.kind if user else "User"
        return {"login": login, "type": kind}

    def _summary(self, repo: MockRepo) -> dict:
        return {
            "id": repo.github_id,
            "name": repo.name,
            "full_name": repo.full_name,
            "owner": self._owner_payload(repo.owner),
            "description": repo.description,
            "created_at": repo.created_at,
        }

    def _detail(self, repo: MockRepo) -> dict:
        return {
            **self._summary(repo),
            "homepage": repo.homepage,
            "topics": list(repo.topics),
            "language": repo.language or None,
            "license": {"spdx_id": repo.license_spdx} if repo.license_spdx else None,
            "stargazers_count": repo.stars,
            "forks_count": repo.forks,
            "subscribers_count": repo.subscribers,
            "updated_at": repo.updated_at,
        }

    # -- search

    def _search_matches(self, q: str) -> Optional[list[MockRepo]]:
        created_m = re.search(r"\s+created:(\d{4}-\d{2}-\d{2})\.\.(\d{4}-\d{2}-\d{2})$", q)
        base = q[: created_m.start()] if created_m else q
        in_m = re.fullmatch(r'"(.+)" in:(name|description|readme|email)', base)
        topic_m = re.fullmatch(r"topic:(\S+)", base)
        if not in_m and not topic_m:
            return None

        def created_ok(repo: MockRepo) -> bool:
            if not created_m:
                return True
            day = repo.created_at[:10]
            return created_m.group(1) <= day <= created_m.group(2)

        matches = []
        for repo in self.corpus.repos.values():
            if not created_ok(repo):
                continue
            if topic_m:
                if topic_m.group(1).lower() in {t.lower() for t in repo.topics}:
                    matches.append(repo)
                continue
            keyword = in_m.group(1).lower()
            attribute = in_m.group(2)
            if attribute == "name":
                hit = keyword in repo.name.lower()
            elif attribute == "description":
                hit = keyword in repo.description.lower()
            elif attribute == "readme":
                hit = keyword in (repo.readme or "").lower()
            else:  # email: matched against the owning account's email
                owner = self.corpus.users.get(repo.owner)
                hit = bool(owner and keyword in owner.email.lower())
            if hit:
                matches.append(repo)
        return sorted(matches, key=lambda r: r.full_name)

    def route(self, handler, method, path, query):
        if method == "GET" and path == "/search/repositories":
            q = (query.get("q") or [""])[0]
            per_page = int((query.get("per_page") or ["30"])[0])
            page = int((query.get("page") or ["1"])[0])
            matches = self._search_matches(q)
            if matches is None:
                handler._reply(422, {"message": f"unsupported query {q!r}"})
                return
            start = (page - 1) * per_page
            if start >= SEARCH_CAP:
                handler._reply(
                    422,
                    {"message": "Only the first 1000 search results are available"},
                )
                return
            end = min(start + per_page, SEARCH_CAP, len(matches))
            items = [self._summary(r) for r in matches[start:end]]
            handler._reply(
                200,
                {
                    "total_count": len(matches),
                    "incomplete_results": False,
                    "items": items,
                },
            )
            return

        repo_m = re.fullmatch(r"/repos/([^/]+)/([^/]+)(/.*)?", path)
        if method == "GET" and repo_m:
            full_name = f"{repo_m.group(1)}/{repo_m.group(2)}"
            sub = repo_m.group(3) or ""
            repo = self.corpus.repos.get(full_name)
            if repo is None:
                handler._reply(404, {"message": "Not Found"})
                return
            if sub == "":
                handler._reply(200, self._detail(repo))
            elif sub == "/readme":
                if repo.readme is None:
                    handler._reply(404, {"message": "Not Found"})
                else:
                    handler._reply(
                        200,
                        {
                            "encoding": "base64",
                            "content": base64.b64encode(
                                repo.readme.encode("utf-8")
                            ).decode("ascii"),
                        },
                    )
            elif sub == "/community/profile":
                files = {
                    "readme": {"name": "README.md"} if repo.readme else None,
                    "license": {"spdx_id": repo.license_spdx}
                    if repo.license_spdx
                    else None,
                    "code_of_conduct": {"name": "CODE_OF_CONDUCT.md"}
                    if repo.has_code_of_conduct
                    else None,
                    "contributing": {"name": "CONTRIBUTING.md"}
                    if repo.has_contributing
                    else None,
                    "security_policy": {"name": "SECURITY.md"}
                    if repo.has_security_policy
                    else None,
                    "issue_template": {"name": "ISSUE_TEMPLATE.md"}
                    if repo.has_issue_template
                    else None,
                    "pull_request_template": {"name": "PULL_REQUEST_TEMPLATE.md"}
                    if repo.has_pr_template
                    else None,
                }
                handler._reply(200, {"health_percentage": 42, "files": files})
            elif sub == "/releases":
                handler._reply(
                    200,
                    [
                        {"assets": [{"download_count": count}]}
                        for count in repo.release_downloads
                    ],
                )
            elif sub == "/contributors":
                handler._reply(
                    200,
                    [
                        {"login": login, "contributions": commits}
                        for login, commits in sorted(
                            repo.contributors, key=lambda lc: -lc[1]
                        )
                    ],
                )
            else:
                handler._reply(404, {"message": "Not Found"})
            return

        user_m = re.fullmatch(r"/users/([^/]+)(/orgs)?", path)
        if method == "GET" and user_m:
            user = self.corpus.users.get(user_m.group(1))
            if user is None:
                handler._reply(404, {"message": "Not Found"})
                return
            if user_m.group(2):
                handler._reply(200, [{"login": o} for o in user.organizations])
                return
            handler._reply(
                200,
                {
                    "login": user.login,
                    "type": user.kind,
                    "name": user.name or None,
                    "bio": user.bio or None,
                    "location": user.location or None,
                    "company": user.company or None,
                    "email": user.email or None,
                    "twitter_username": user.twitter or None,
                    "blog": user.blog or None,
                    "description": user.description or None,
                    "created_at": user.created_at,
                },
            )
            return

        handler._reply(404, {"message": "Not Found"})


class MockInferenceServer(_BaseMockServer):
    """Deterministic embeddings + chat-completions endpoint pair."""

    def __init__(self, corpus: MockCorpus, embedding_dim: int = EMBEDDING_DIM):
        super().__init__()
        self.corpus = corpus
        self.embedding_dim = embedding_dim

    def route(self, handler, method, path, query):
        if method == "POST" and path == "/v1/embeddings":
            body = handler._body()
            texts = body.get("input") or []
            data = [
                {
                    "object": "embedding",
                    "index": i,
                    "embedding": deterministic_embedding(text, self.embedding_dim),
                }
                for i, text in enumerate(texts)
            ]
            handler._reply(
                200,
                {
                    "object": "list",
                    "model": body.get("model", EMBED_MODEL),
                    "data": data,
                    "usage": {
                        "prompt_tokens": sum(len(t) // 4 for t in texts),
                        "total_tokens": sum(len(t) // 4 for t in texts),
                    },
                },
            )
            return

        if method == "POST" and path == "/v1/chat/completions":
            body = handler._body()
            prompt_text = "\n".join(
                m.get("content", "")
                for m in body.get("messages", [])
                if m.get("role") == "user"
            )
            probability, explanation = deterministic_verdict(self.corpus, prompt_text)
            content = f"Probability: {probability:.2f}\nExplanation: {explanation}"
            handler._reply(
                200,
                {
                    "id": "mock-completion",
                    "model": body.get("model", CHAT_MODEL),
                    "choices": [
                        {
                            "index": 0,
                            "message": {"role": "assistant", "content": content},
                            "finish_reason": "stop",
                        }
                    ],
                    "usage": {
                        "prompt_tokens": len(prompt_text) // 4,
                        "completion_tokens": len(content) // 4,
                    },
                },
            )
            return

        handler._reply(404, {"message": "Not Found"})
