"""Domain records, institution profiles, and the canonical affiliation definition.

Every type here is an immutable value object: safe to share between threads
and to use as dict keys. Validation happens at construction time so that a
record that exists is a record that is well-formed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Union

import yaml

from .errors import ConfigError

CLASSIFIER_KINDS = ("sbc", "svm", "llm")
OWNER_KINDS = ("user", "organization")

LICENSE_NONE = "NONE"

# Canonical affiliation definition. All classifiers and the labeling UI
# consume this exact block; it must never be reformatted per call site.
AFFILIATION_DEFINITION = """\
A repository is considered to be affiliated with a university if it satisfies any of the following criteria:

1. Research Group Affiliation: Developed or maintained by a research group, academic department, research center, or lab that is officially part of the university.

2. Contributor Affiliation: One or more key contributors (maintainers, primary committers) are students, faculty, researchers, or university staff. Evidence includes: (1) Public profiles listing the university, (2) University email addresses, (3) Project documentation or repository metadata.

3. Institutional Development: Developed by an institutional unit of the university (e.g. libraries, OSPOs, IT departments, administrative offices).

4. Official Sponsorship or Ownership: Sponsored, endorsed or owned by the university, as indicated by the ownership of the GitHub organization, README mentions, or associated websites.

5. Educational Outreach and Online Courses: Online learning initiatives affiliated with the university, including: (1) Repositories linked to online specializations, or courses offered on platforms like Coursera, edX, or similar (2) Course materials, code examples, or tools developed specifically for such offerings.
"""


def affiliation_definition_text() -> str:
    """Return the five-criterion affiliation definition as one canonical block."""
    return AFFILIATION_DEFINITION


@dataclass(frozen=True)
class InstitutionProfile:
    """One institution's search identity: the keywords discovery queries on."""

    id: str
    name: str
    acronym: str
    domain: str
    alternates: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise ValueError("id must be non-empty")
        if not self.name or not self.name.strip():
            raise ValueError("name must be non-empty")
        if not self.acronym or any(ch.isspace() for ch in self.acronym):
            raise ValueError("acronym must be non-empty and contain no whitespace")
        if self.domain != self.domain.lower() or "." not in self.domain or not self.domain:
            raise ValueError("domain must be lowercase and contain at least one dot")
        if not self.alternates or any(not alt.strip() for alt in self.alternates):
            raise ValueError("alternates must contain at least one non-empty name")
        object.__setattr__(self, "alternates", tuple(self.alternates))

    @property
    def keywords(self) -> tuple[str, ...]:
        """Search keywords in canonical order: name, acronym, domain, alternates."""
        return (self.name, self.acronym, self.domain, *self.alternates)


@dataclass(frozen=True)
class CommunityFlags:
    """Presence of the recommended community files plus description/README."""

    has_readme: bool = False
    has_license: bool = False
    has_code_of_conduct: bool = False
    has_contributing: bool = False
    has_security_policy: bool = False
    has_issue_template: bool = False
    has_pr_template: bool = False
    has_description: bool = False

    FIELD_ORDER = (
        "has_readme",
        "has_license",
        "has_code_of_conduct",
        "has_contributing",
        "has_security_policy",
        "has_issue_template",
        "has_pr_template",
        "has_description",
    )


@dataclass(frozen=True)
class RepoRecord:
    """One repository's scraped metadata, keyed by the "owner/name" pair."""

    repo_id: str
    name: str = ""
    description: str = ""
    homepage: str = ""
    readme_text: str = ""
    topics: tuple[str, ...] = ()
    primary_language: str = ""
    license_id: str = LICENSE_NONE
    owner_login: str = ""
    owner_kind: str = "user"
    stars: int = 0
    forks: int = 0
    subscribers: int = 0
    release_download_count: int = 0
    created_at: str = ""
    updated_at: str = ""
    community: CommunityFlags = field(default_factory=CommunityFlags)
    # Provenance: (institution_id, attribute, keyword) per originating query.
    matched_queries: tuple[tuple[str, str, str], ...] = ()
    github_id: int = 0

    def __post_init__(self) -> None:
        if "/" not in self.repo_id:
            raise ValueError(f"repo_id must be 'owner/name', got {self.repo_id!r}")
        if self.owner_kind not in OWNER_KINDS:
            raise ValueError(f"owner_kind must be one of {OWNER_KINDS}, got {self.owner_kind!r}")
        for count_field in ("stars", "forks", "subscribers", "release_download_count"):
            if getattr(self, count_field) < 0:
                raise ValueError(f"{count_field} must be >= 0")
        if self.community.has_description != bool(self.description):
            raise ValueError("has_description must mirror a non-empty description")
        if self.community.has_readme != bool(self.readme_text):
            raise ValueError("has_readme must mirror a non-empty readme_text")
        object.__setattr__(self, "topics", tuple(self.topics))
        object.__setattr__(
            self, "matched_queries", tuple(tuple(t) for t in self.matched_queries)
        )

    def with_matches(self, matches: Iterable[tuple[str, str, str]]) -> "RepoRecord":
        """Return a copy with the provenance set unioned with `matches`."""
        merged = sorted(set(self.matched_queries) | {tuple(m) for m in matches})
        return replace(self, matched_queries=tuple(merged))


@dataclass(frozen=True)
class ContributorRecord:
    """One contributor row for a repository, ranked by commit count."""

    repo_id: str
    username: str
    rank: int
    name: str = ""
    bio: str = ""
    location: str = ""
    company: str = ""
    email: str = ""
    twitter: str = ""
    organizations: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.username:
            raise ValueError("username must be non-empty")
        object.__setattr__(self, "organizations", tuple(self.organizations))


@dataclass(frozen=True)
class OrgRecord:
    """Owner-organization metadata; only exists for organization-owned repos."""

    login: str
    name: str = ""
    company: str = ""
    location: str = ""
    description: str = ""
    email: str = ""
    url: str = ""
    created_at: str = ""

    def __post_init__(self) -> None:
        if not self.login:
            raise ValueError("login must be non-empty")


@dataclass(frozen=True)
class LabelRecord:
    """A human ground-truth affiliation judgment for (repo, institution)."""

    repo_id: str
    institution_id: str
    label: int
    labeler: str = "anonymous"
    labeled_at: str = ""

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Prediction:
    """A classifier's probability that a repo is affiliated with an institution."""

    repo_id: str
    institution_id: str
    classifier: str
    model_tag: str
    probability: float
    explanation: str = ""
    produced_at: str = ""

    def __post_init__(self) -> None:
        if self.classifier not in CLASSIFIER_KINDS:
            raise ValueError(
                f"classifier must be one of {CLASSIFIER_KINDS}, got {self.classifier!r}"
            )
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability!r}")


ConfigSource = Union[str, Path, IO[str]]


def _read_config(source: ConfigSource) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    return source.read()


def parse_institution_profiles(text: str) -> list[InstitutionProfile]:
    """Parse a YAML institutions document into validated profiles."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config does not parse as YAML: {exc}") from exc
    if doc is None:
        raise ConfigError("config document is empty")
    if not isinstance(doc, dict) or "institutions" not in doc:
        raise ConfigError("config must be a mapping with an 'institutions' list")
    entries = doc["institutions"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'institutions' must be a non-empty list")

    profiles: list[InstitutionProfile] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"institution #{i + 1} is not a mapping")
        label = str(entry.get("id") or f"#{i + 1}")
        for key in ("id", "name", "acronym", "domain", "alternates"):
            if key not in entry:
                raise ConfigError(f"institution {label}: missing field '{key}'")
        alternates = entry["alternates"]
        if isinstance(alternates, str):
            alternates = [alternates]
        try:
            profile = InstitutionProfile(
                id=str(entry["id"]),
                name=str(entry["name"]),
                acronym=str(entry["acronym"]),
                domain=str(entry["domain"]),
                alternates=tuple(str(a) for a in alternates),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"institution {label}: {exc}") from exc
        if profile.id in seen:
            raise ConfigError(f"institution {label}: duplicate id")
        seen.add(profile.id)
        profiles.append(profile)
    return profiles


def load_institution_profiles(source: ConfigSource) -> list[InstitutionProfile]:
    """Load institution profiles from a YAML path or open text stream.

    Returns profiles in declaration order. Raises ConfigError naming the
    offending profile and field on any invariant violation.
    """
    return parse_institution_profiles(_read_config(source))


def dump_institution_profiles(profiles: Iterable[InstitutionProfile]) -> str:
    """Serialize profiles back to the YAML config schema (parse round-trips)."""
    doc = {
        "institutions": [
            {
                "id": p.id,
                "name": p.name,
                "acronym": p.acronym,
                "domain": p.domain,
                "alternates": list(p.alternates),
            }
            for p in profiles
        ]
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def default_institution_profiles() -> list[InstitutionProfile]:
    """Load the packaged default config (the ten University of California campuses)."""
    ref = resources.files("repoaffil").joinpath("data/institutions.yaml")
    return parse_institution_profiles(ref.read_text(encoding="utf-8"))


def default_config_path() -> Path:
    """Filesystem path of the packaged default institutions config."""
    return Path(str(resources.files("repoaffil").joinpath("data/institutions.yaml")))
