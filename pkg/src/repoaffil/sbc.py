"""Rule-based affiliation scorer over repo, org, and top-contributor fields.

Each (component, attribute, criterion) cell in the weight table is checked
against the corresponding metadata field; matched weights are summed and
capped at 1. Matching is binary per attribute: repeated occurrences of a
keyword inside one field count once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import ConfigError
from .model import ContributorRecord, InstitutionProfile, OrgRecord, RepoRecord

CRITERIA = ("domain", "keyword")

# (component, attribute, criterion) -> weight. Checked in this order so
# MatchReport hits are reproducible.
DEFAULT_WEIGHTS: dict[tuple[str, str, str], float] = {
    ("repo", "homepage", "domain"): 1.0,
    ("repo", "readme", "keyword"): 0.20,
    ("repo", "description", "keyword"): 0.20,
    ("repo", "name", "keyword"): 0.20,
    ("org", "url", "domain"): 1.0,
    ("org", "email", "domain"): 1.0,
    ("org", "name", "keyword"): 0.30,
    ("org", "description", "keyword"): 0.30,
    ("org", "company", "keyword"): 0.30,
    ("contributor", "email", "domain"): 0.50,
    ("contributor", "name", "domain"): 0.50,
    ("contributor", "bio", "domain"): 0.50,
    ("contributor", "company", "domain"): 0.50,
    ("contributor", "email", "keyword"): 0.20,
    ("contributor", "name", "keyword"): 0.20,
    ("contributor", "bio", "keyword"): 0.20,
    ("contributor", "company", "keyword"): 0.20,
}

_REPO_FIELDS = {
    "homepage": lambda r: r.homepage,
    "readme": lambda r: r.readme_text,
    "description": lambda r: r.description,
    "name": lambda r: r.name,
}
_ORG_FIELDS = {
    "url": lambda o: o.url,
    "email": lambda o: o.email,
    "name": lambda o: o.name,
    "description": lambda o: o.description,
    "company": lambda o: o.company,
}
_CONTRIB_FIELDS = {
    "email": lambda c: c.email,
    "name": lambda c: c.name,
    "bio": lambda c: c.bio,
    "company": lambda c: c.company,
}


@dataclass(frozen=True)
class ScoreWeightTable:
    """Weights per (component, attribute, criterion); all in [0, 1]."""

    entries: Mapping[tuple[str, str, str], float]

    def __post_init__(self) -> None:
        for key, weight in self.entries.items():
            if not 0.0 <= weight <= 1.0:
                raise ValueError(f"weight for {key} must be in [0, 1], got {weight}")
        object.__setattr__(self, "entries", dict(self.entries))

    @classmethod
    def default(cls) -> "ScoreWeightTable":
        return cls(dict(DEFAULT_WEIGHTS))

    @classmethod
    def from_config(cls, doc: Mapping) -> "ScoreWeightTable":
        """Parse an override mapping of "component.attribute.criterion" -> weight."""
        entries = dict(DEFAULT_WEIGHTS)
        for dotted, weight in doc.items():
            parts = str(dotted).split(".")
            if len(parts) != 3:
                raise ConfigError(
                    f"weight key {dotted!r} must look like component.attribute.criterion"
                )
            key = (parts[0], parts[1], parts[2])
            if key not in DEFAULT_WEIGHTS:
                raise ConfigError(f"unknown weight cell {dotted!r}")
            try:
                entries[key] = float(weight)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"weight for {dotted!r} is not a number") from exc
        try:
            return cls(entries)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ScoreHit:
    """One matched (component, attribute, criterion) cell with its evidence."""

    component: str
    attribute: str
    criterion: str
    matched_text: str
    weight: float
    contributor_rank: Optional[int] = None


@dataclass(frozen=True)
class MatchReport:
    """All hits for one repository plus the capped total probability."""

    repo_id: str
    institution_id: str
    hits: tuple[ScoreHit, ...]
    total: float


def _collapse_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text)


def _find_match(text: str, profile: InstitutionProfile, criterion: str) -> Optional[str]:
    """Return the matched span (original casing) or None.

    domain: case-insensitive substring of the profile domain. keyword: name
    and alternates as whitespace-collapsed substrings; the acronym only at
    token boundaries (start/end, whitespace, or punctuation on both sides).
    """
    if not text:
        return None
    if criterion == "domain":
        idx = text.lower().find(profile.domain)
        if idx >= 0:
            return text[idx : idx + len(profile.domain)]
        return None
    if criterion == "keyword":
        collapsed = _collapse_ws(text)
        lowered = collapsed.lower()
        for phrase in (profile.name, *profile.alternates):
            needle = _collapse_ws(phrase).lower()
            idx = lowered.find(needle)
            if idx >= 0:
                return collapsed[idx : idx + len(needle)]
        pattern = re.compile(
            r"(?<![A-Za-z0-9])" + re.escape(profile.acronym) + r"(?![A-Za-z0-9])",
            re.IGNORECASE,
        )
        m = pattern.search(text)
        if m:
            return m.group(0)
        return None
    raise ValueError(f"unknown criterion {criterion!r}")


def match_attribute(text: str, profile: InstitutionProfile, criterion: str) -> bool:
    """True iff `text` matches the profile under the given criterion."""
    return _find_match(text, profile, criterion) is not None


def score_repository(
    repo: RepoRecord,
    org: Optional[OrgRecord],
    top2: Sequence[ContributorRecord],
    profile: InstitutionProfile,
    weights: Optional[ScoreWeightTable] = None,
) -> MatchReport:
    """Evaluate every weight-table cell and return the capped total.

    `top2` may hold zero, one, or two contributors with ranks 1-2; each
    contributor is scored independently, so both can contribute the same
    cell's weight. Absent org/contributors contribute nothing.
    """
    table = weights or ScoreWeightTable.default()
    ranks = [c.rank for c in top2]
    if any(r not in (1, 2) for r in ranks) or len(ranks) != len(set(ranks)):
        raise ValueError("top2 must hold distinct contributors with ranks 1-2 only")

    hits: list[ScoreHit] = []
    raw_total = 0.0
    for (component, attribute, criterion), weight in DEFAULT_WEIGHTS.items():
        weight = table.entries.get((component, attribute, criterion), weight)
        if component == "repo":
            targets: list[tuple[Optional[int], str]] = [
                (None, _REPO_FIELDS[attribute](repo))
            ]
        elif component == "org":
            targets = [(None, _ORG_FIELDS[attribute](org))] if org else []
        else:
            targets = [
                (c.rank, _CONTRIB_FIELDS[attribute](c))
                for c in sorted(top2, key=lambda c: c.rank)
            ]
        for rank, text in targets:
            span = _find_match(text, profile, criterion)
            if span is not None:
                hits.append(
                    ScoreHit(component, attribute, criterion, span, weight, rank)
                )
                raw_total += weight

    return MatchReport(
        repo_id=repo.repo_id,
        institution_id=profile.id,
        hits=tuple(hits),
        total=min(raw_total, 1.0),
    )
