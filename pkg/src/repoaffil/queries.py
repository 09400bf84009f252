"""Search-query generation for repository discovery.

Each institution expands to one query per (keyword, attribute) pair over the
name/description/readme/topics attributes, plus a single email query on the
institution domain: (3 + len(alternates)) * 4 + 1 queries in total.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import InstitutionProfile

KEYWORD_ATTRIBUTES = ("name", "description", "readme", "topics")
EMAIL_ATTRIBUTE = "email"
ATTRIBUTES = KEYWORD_ATTRIBUTES + (EMAIL_ATTRIBUTE,)


def render_query(keyword: str, attribute: str) -> str:
    """Render the exact query string sent to the search endpoint.

    name/description/readme use quoted in:<attribute> qualifiers; topics uses
    the topic:<keyword> qualifier with whitespace hyphenated; email quotes the
    domain with in:email.
    """
    if attribute in ("name", "description", "readme", "email"):
        return f'"{keyword}" in:{attribute}'
    if attribute == "topics":
        hyphenated = re.sub(r"\s+", "-", keyword.strip()).lower()
        return f"topic:{hyphenated}"
    raise ValueError(f"unknown search attribute {attribute!r}")


@dataclass(frozen=True)
class SearchQuery:
    """One rendered search query with its provenance triple."""

    institution_id: str
    keyword: str
    attribute: str
    rendered: str

    def provenance(self) -> tuple[str, str, str]:
        return (self.institution_id, self.attribute, self.keyword)


def generate_queries(profile: InstitutionProfile) -> list[SearchQuery]:
    """Expand a profile into its full query set, keyword-major, attribute-minor.

    Keyword order is name, acronym, domain, then alternates in declaration
    order; the domain/email query always comes last.
    """
    queries = [
        SearchQuery(profile.id, keyword, attribute, render_query(keyword, attribute))
        for keyword in profile.keywords
        for attribute in KEYWORD_ATTRIBUTES
    ]
    queries.append(
        SearchQuery(
            profile.id,
            profile.domain,
            EMAIL_ATTRIBUTE,
            render_query(profile.domain, EMAIL_ATTRIBUTE),
        )
    )
    return queries
