"""Post-classification analyses: affiliation rates and metadata distributions.

All functions are pure over the records passed in; the CLI wires them to a
store snapshot filtered at the chosen classifier threshold.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .model import CommunityFlags, Prediction, RepoRecord

NO_LANGUAGE = "none"
NO_LICENSE = "NONE"


@dataclass(frozen=True)
class RateRow:
    institution_id: str
    retrieved: int
    predicted_affiliated: int
    percent: Optional[float]  # None renders as an em-dash-free "-" marker


@dataclass(frozen=True)
class DistributionRow:
    key: str
    count: int
    percent: float


@dataclass(frozen=True)
class FlagRow:
    flag: str
    count: int
    percent: Optional[float]


def _round_percent(value: float) -> float:
    return round(value, 1)


def _apportion_percents(counts: Sequence[int]) -> list[float]:
    """One-decimal percents that sum to exactly 100.0 (largest remainder).

    Plain per-bucket rounding can drift by several tenths with many buckets;
    apportioning the tenths keeps every distribution's total at 100.0.
    """
    total = sum(counts)
    if total == 0:
        return [0.0 for _ in counts]
    exact_tenths = [count * 1000.0 / total for count in counts]
    floors = [int(t) for t in exact_tenths]
    shortfall = 1000 - sum(floors)
    remainders = sorted(
        range(len(counts)), key=lambda i: (-(exact_tenths[i] - floors[i]), i)
    )
    for i in remainders[:shortfall]:
        floors[i] += 1
    return [f / 10.0 for f in floors]


def affiliation_rates(
    predictions: Sequence[Prediction],
    retrieved_counts: Mapping[str, int],
    classifier: str,
    threshold: float,
) -> list[RateRow]:
    """Per-institution predicted-affiliated counts and rates, plus a totals row.

    A repo counts as predicted affiliated when its probability under the given
    classifier is >= threshold. Institutions come from `retrieved_counts`.
    """
    affiliated: dict[str, set[str]] = {inst: set() for inst in retrieved_counts}
    for p in predictions:
        if p.classifier != classifier or p.institution_id not in affiliated:
            continue
        if p.probability >= threshold:
            affiliated[p.institution_id].add(p.repo_id)

    rows: list[RateRow] = []
    for inst in sorted(retrieved_counts):
        retrieved = retrieved_counts[inst]
        predicted = len(affiliated[inst])
        percent = _round_percent(predicted / retrieved * 100.0) if retrieved else None
        rows.append(RateRow(inst, retrieved, predicted, percent))

    total_retrieved = sum(r.retrieved for r in rows)
    total_predicted = sum(r.predicted_affiliated for r in rows)
    total_percent = (
        _round_percent(total_predicted / total_retrieved * 100.0)
        if total_retrieved
        else None
    )
    rows.append(RateRow("TOTAL", total_retrieved, total_predicted, total_percent))
    return rows


def _distribution(keys: Sequence[str]) -> list[DistributionRow]:
    counts = Counter(keys)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    percents = _apportion_percents([count for _, count in ranked])
    return [
        DistributionRow(key, count, pct)
        for (key, count), pct in zip(ranked, percents)
    ]


def language_distribution(repos: Sequence[RepoRecord]) -> list[DistributionRow]:
    """Ranked primary-language counts; missing language buckets as "none"."""
    if not repos:
        return []
    return _distribution([r.primary_language or NO_LANGUAGE for r in repos])


def license_distribution(repos: Sequence[RepoRecord]) -> list[DistributionRow]:
    """Ranked license counts; unlicensed repos bucket under NONE."""
    if not repos:
        return []
    return _distribution([r.license_id or NO_LICENSE for r in repos])


def community_standards_report(repos: Sequence[RepoRecord]) -> list[FlagRow]:
    """Share of repos carrying each community flag; empty input renders "-"."""
    n = len(repos)
    rows: list[FlagRow] = []
    for flag in CommunityFlags.FIELD_ORDER:
        count = sum(1 for r in repos if getattr(r.community, flag))
        percent = _round_percent(count / n * 100.0) if n else None
        rows.append(FlagRow(flag, count, percent))
    return rows


# ------------------------------------------------------------------- rendering

def _fmt_percent(value: Optional[float]) -> str:
    return f"{value:.1f}%" if value is not None else "-"


def rates_to_text(rows: Sequence[RateRow]) -> str:
    out = [f"{'Institution':<14}{'Retrieved':>11}{'Predicted':>11}{'Percent':>9}"]
    out += [
        f"{r.institution_id:<14}{r.retrieved:>11}{r.predicted_affiliated:>11}"
        f"{_fmt_percent(r.percent):>9}"
        for r in rows
    ]
    return "\n".join(out)


def distribution_to_text(rows: Sequence[DistributionRow], title: str) -> str:
    out = [f"{title:<24}{'Count':>8}{'Percent':>9}"]
    out += [f"{r.key:<24}{r.count:>8}{_fmt_percent(r.percent):>9}" for r in rows]
    return "\n".join(out)


def flags_to_text(rows: Sequence[FlagRow]) -> str:
    out = [f"{'Community file':<24}{'Count':>8}{'Percent':>9}"]
    out += [f"{r.flag:<24}{r.count:>8}{_fmt_percent(r.percent):>9}" for r in rows]
    return "\n".join(out)


def report_to_json(
    rates: Sequence[RateRow],
    languages: Sequence[DistributionRow],
    licenses: Sequence[DistributionRow],
    community: Sequence[FlagRow],
) -> str:
    doc = {
        "affiliation_rates": [
            {
                "institution_id": r.institution_id,
                "retrieved": r.retrieved,
                "predicted_affiliated": r.predicted_affiliated,
                "percent": r.percent,
            }
            for r in rates
        ],
        "languages": [
            {"language": r.key, "count": r.count, "percent": r.percent}
            for r in languages
        ],
        "licenses": [
            {"license": r.key, "count": r.count, "percent": r.percent}
            for r in licenses
        ],
        "community_files": [
            {"flag": r.flag, "count": r.count, "percent": r.percent}
            for r in community
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def report_to_csv(
    rates: Sequence[RateRow],
    languages: Sequence[DistributionRow],
    licenses: Sequence[DistributionRow],
    community: Sequence[FlagRow],
) -> str:
    lines = ["section,key,count,extra,percent"]
    for r in rates:
        lines.append(
            f"affiliation_rates,{r.institution_id},{r.predicted_affiliated},"
            f"{r.retrieved},{'' if r.percent is None else r.percent}"
        )
    for r in languages:
        lines.append(f"languages,{r.key},{r.count},,{r.percent}")
    for r in licenses:
        lines.append(f"licenses,{r.key},{r.count},,{r.percent}")
    for r in community:
        lines.append(
            f"community_files,{r.flag},{r.count},,"
            f"{'' if r.percent is None else r.percent}"
        )
    return "\n".join(lines) + "\n"
