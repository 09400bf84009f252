"""Per-repository text assembly for the embedding and LLM classifiers.

The assembled block concatenates repo, org, contributor-1, and contributor-2
fields in a fixed, labeled order. Each field value is truncated to the limit;
absent components keep their labels with empty bodies so the skeleton is
stable across repositories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .model import ContributorRecord, OrgRecord, RepoRecord

DEFAULT_FIELD_LIMIT = 10_000

# Documented field order. The README comes last within the repo block because
# it is typically the longest field and the one truncation affects.
_REPO_FIELDS = (
    ("repository full_name", lambda r: r.repo_id),
    ("repository name", lambda r: r.name),
    ("repository description", lambda r: r.description),
    ("repository homepage", lambda r: r.homepage),
    ("repository topics", lambda r: ", ".join(r.topics)),
    ("repository language", lambda r: r.primary_language),
    ("repository license", lambda r: r.license_id),
    ("repository readme", lambda r: r.readme_text),
)
_ORG_FIELDS = (
    ("organization login", lambda o: o.login),
    ("organization name", lambda o: o.name),
    ("organization company", lambda o: o.company),
    ("organization location", lambda o: o.location),
    ("organization description", lambda o: o.description),
    ("organization email", lambda o: o.email),
    ("organization url", lambda o: o.url),
)
_CONTRIB_FIELDS = (
    ("username", lambda c: c.username),
    ("name", lambda c: c.name),
    ("bio", lambda c: c.bio),
    ("location", lambda c: c.location),
    ("company", lambda c: c.company),
    ("email", lambda c: c.email),
    ("twitter", lambda c: c.twitter),
    ("organizations", lambda c: ", ".join(c.organizations)),
)


@dataclass(frozen=True)
class AssembledText:
    """The classification text for one repository plus the limit used."""

    repo_id: str
    text: str
    field_limit: int


def _clip(value: str, limit: int) -> str:
    return value[:limit]


def assemble_text(
    repo: RepoRecord,
    org: Optional[OrgRecord],
    top2: Sequence[ContributorRecord],
    field_limit: int = DEFAULT_FIELD_LIMIT,
) -> AssembledText:
    """Build the deterministic labeled text block for one repository."""
    by_rank = {c.rank: c for c in top2}
    lines: list[str] = []
    for label, getter in _REPO_FIELDS:
        lines.append(f"{label}: {_clip(getter(repo), field_limit)}")
    for label, getter in _ORG_FIELDS:
        lines.append(f"{label}: {_clip(getter(org), field_limit) if org else ''}")
    for rank in (1, 2):
        contributor = by_rank.get(rank)
        for label, getter in _CONTRIB_FIELDS:
            value = _clip(getter(contributor), field_limit) if contributor else ""
            lines.append(f"contributor {rank} {label}: {value}")
    return AssembledText(repo.repo_id, "\n".join(lines), field_limit)
