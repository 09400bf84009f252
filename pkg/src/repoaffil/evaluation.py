"""Sampling protocol, ROC/AUC, Youden threshold selection, and cost estimates.

Everything here is pure computation over in-memory scored sets. The decision
rule at a threshold is inclusive: probability >= threshold predicts positive.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import MetricError, SamplingError
from .model import LabelRecord


@dataclass(frozen=True)
class ScoredItem:
    repo_id: str
    probability: float
    label: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class ScoredSet:
    """Scored, labeled repositories for one evaluation run."""

    entries: tuple[ScoredItem, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float, int]]) -> "ScoredSet":
        return cls(tuple(ScoredItem(r, p, y) for r, p, y in pairs))

    @classmethod
    def join(
        cls, labels: Sequence[LabelRecord], scores: Mapping[str, float]
    ) -> "ScoredSet":
        """Attach scores to labeled repos; every label must have a score."""
        missing = [l.repo_id for l in labels if l.repo_id not in scores]
        if missing:
            raise MetricError(f"missing scores for {len(missing)} repos: {missing[:5]}")
        return cls(
            tuple(ScoredItem(l.repo_id, scores[l.repo_id], l.label) for l in labels)
        )

    def class_counts(self) -> tuple[int, int]:
        pos = sum(1 for e in self.entries if e.label == 1)
        return pos, len(self.entries) - pos


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    threshold: float


@dataclass(frozen=True)
class ThresholdMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class EvalReport:
    """Full evaluation output: ROC sweep, AUC, operating point, and metrics."""

    institution_id: str
    classifier: str
    model_tag: str
    n_positive: int
    n_negative: int
    roc: tuple[RocPoint, ...]
    auc: float
    optimal_threshold: float
    youden_j: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: tuple[int, int, int, int]  # (tp, fp, fn, tn)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["roc"] = [
            {"fpr": p.fpr, "tpr": p.tpr, "threshold": p.threshold} for p in self.roc
        ]
        doc["confusion"] = {
            "tp": self.confusion[0],
            "fp": self.confusion[1],
            "fn": self.confusion[2],
            "tn": self.confusion[3],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_text(self) -> str:
        """Aligned one-row performance table plus the operating point."""
        header = f"{'Classifier':<12}{'AUC':>8}{'Thresh':>9}{'J':>8}{'Acc':>8}{'F1':>8}"
        row = (
            f"{self.classifier:<12}{self.auc:>8.3f}{self.optimal_threshold:>9.3f}"
            f"{self.youden_j:>8.3f}{self.accuracy:>8.3f}{self.f1:>8.3f}"
        )
        tp, fp, fn, tn = self.confusion
        tail = (
            f"institution={self.institution_id} model={self.model_tag} "
            f"n={self.n_positive}+/{self.n_negative}-  "
            f"confusion tp={tp} fp={fp} fn={fn} tn={tn}"
        )
        return "\n".join((header, row, tail))

    def roc_csv(self) -> str:
        lines = ["fpr,tpr,threshold"]
        lines += [f"{p.fpr:.10g},{p.tpr:.10g},{p.threshold:.10g}" for p in self.roc]
        return "\n".join(lines) + "\n"


def sample_training_set(
    pool: Sequence[LabelRecord],
    institution_id: str,
    n: int = 200,
    seed: int = 0,
) -> list[LabelRecord]:
    """Uniform sample without replacement from the institution's labeled pool.

    Deliberately NOT class-balanced, so the training set reflects the realistic
    class distribution. Deterministic given the seed.
    """
    candidates = sorted(
        (l for l in pool if l.institution_id == institution_id),
        key=lambda l: l.repo_id,
    )
    if len(candidates) < n:
        raise SamplingError(
            f"labeled pool for {institution_id} has {len(candidates)} repos, need {n}"
        )
    rng = random.Random(seed)
    return rng.sample(candidates, n)


def build_balanced_test_set(
    pool: Sequence[LabelRecord],
    institution_id: str,
    n_per_class: int = 50,
    seed: int = 0,
    exclude_repo_ids: Iterable[str] = (),
) -> list[LabelRecord]:
    """Sample exactly n_per_class labeled repos per class, disjoint from training.

    Repos named in `exclude_repo_ids` (the training sample) are removed before
    sampling. Raises SamplingError with per-class counts when a class runs short.
    """
    excluded = set(exclude_repo_ids)
    candidates = sorted(
        (
            l
            for l in pool
            if l.institution_id == institution_id and l.repo_id not in excluded
        ),
        key=lambda l: l.repo_id,
    )
    positives = [l for l in candidates if l.label == 1]
    negatives = [l for l in candidates if l.label == 0]
    if len(positives) < n_per_class or len(negatives) < n_per_class:
        raise SamplingError(
            f"balanced test set for {institution_id} needs {n_per_class} per class; "
            f"pool has {len(positives)} positive, {len(negatives)} negative"
        )
    rng = random.Random(seed)
    sample = rng.sample(positives, n_per_class) + rng.sample(negatives, n_per_class)
    return sorted(sample, key=lambda l: l.repo_id)


def _require_both_classes(scored: ScoredSet) -> tuple[int, int]:
    pos, neg = scored.class_counts()
    if pos == 0 or neg == 0:
        raise MetricError(
            f"both classes required: {pos} positive, {neg} negative in scored set"
        )
    return pos, neg


def roc_points(scored: ScoredSet) -> list[RocPoint]:
    """Sweep thresholds over the distinct scores, grouping ties into one step.

    The curve starts at (0, 0) with an unreachable sentinel threshold and ends
    at (1, 1) at the minimum score (rule: probability >= threshold is positive).
    """
    pos, neg = _require_both_classes(scored)
    by_score = sorted(scored.entries, key=lambda e: -e.probability)
    points = [RocPoint(0.0, 0.0, math.inf)]
    tp = fp = 0
    i = 0
    n = len(by_score)
    while i < n:
        score = by_score[i].probability
        while i < n and by_score[i].probability == score:
            if by_score[i].label == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(RocPoint(fp / neg, tp / pos, score))
    return points


def auc_from_roc(points: Sequence[RocPoint]) -> float:
    """Trapezoidal area under the ROC sweep."""
    area = 0.0
    for prev, cur in zip(points, points[1:]):
        area += (cur.fpr - prev.fpr) * (cur.tpr + prev.tpr) / 2.0
    return area


def roc_auc(scored: ScoredSet) -> tuple[list[RocPoint], float]:
    points = roc_points(scored)
    return points, auc_from_roc(points)


def optimal_threshold(scored: ScoredSet) -> tuple[float, float]:
    """The distinct score maximizing Youden's J = TPR - FPR.

    Ties break toward higher TPR, then toward the lower threshold.
    """
    points = roc_points(scored)
    best: Optional[RocPoint] = None
    best_j = -math.inf
    for point in points[1:]:  # skip the unreachable sentinel
        j = point.tpr - point.fpr
        if (
            best is None
            or j > best_j
            or (
                j == best_j
                and (
                    point.tpr > best.tpr
                    or (point.tpr == best.tpr and point.threshold < best.threshold)
                )
            )
        ):
            best = point
            best_j = j
    assert best is not None
    return best.threshold, best_j


def threshold_metrics(scored: ScoredSet, threshold: float) -> ThresholdMetrics:
    """Accuracy/precision/recall/F1 and the confusion counts at a threshold."""
    tp = fp = fn = tn = 0
    for e in scored.entries:
        predicted = e.probability >= threshold
        if predicted and e.label == 1:
            tp += 1
        elif predicted:
            fp += 1
        elif e.label == 1:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    return ThresholdMetrics(accuracy, precision, recall, f1, tp, fp, fn, tn)


def evaluate_scored_set(
    scored: ScoredSet,
    institution_id: str = "",
    classifier: str = "",
    model_tag: str = "",
) -> EvalReport:
    """ROC sweep, AUC, Youden operating point, and metrics in one report."""
    points, auc = roc_auc(scored)
    threshold, j = optimal_threshold(scored)
    metrics = threshold_metrics(scored, threshold)
    pos, neg = scored.class_counts()
    return EvalReport(
        institution_id=institution_id,
        classifier=classifier,
        model_tag=model_tag,
        n_positive=pos,
        n_negative=neg,
        roc=tuple(points),
        auc=auc,
        optimal_threshold=threshold,
        youden_j=j,
        accuracy=metrics.accuracy,
        precision=metrics.precision,
        recall=metrics.recall,
        f1=metrics.f1,
        confusion=(metrics.tp, metrics.fp, metrics.fn, metrics.tn),
    )


@dataclass(frozen=True)
class CostEstimate:
    """Token-count and price projection for running a classifier over n items."""

    model_tag: str
    avg_chars: int
    input_tokens: int
    output_tokens: int
    price_in_per_1k: float
    price_out_per_1k: float
    input_cost_per_item: float
    output_cost_per_item: float
    cost_per_item: float
    n_items: int
    total_cost: float
    wall_time_seconds: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_text(self) -> str:
        header = (
            f"{'Model':<14}{'Chars':>8}{'TokIn':>8}{'TokOut':>8}"
            f"{'$/item':>12}{'Total':>12}"
        )
        row = (
            f"{self.model_tag:<14}{self.avg_chars:>8}{self.input_tokens:>8}"
            f"{self.output_tokens:>8}{self.cost_per_item:>12.6f}"
            f"{self.total_cost:>12.2f}"
        )
        return "\n".join((header, row))


def estimate_tokens(chars: int) -> int:
    """Character-count token estimate: ceil(chars / 4)."""
    return math.ceil(chars / 4)


def estimate_cost(
    model_tag: str,
    avg_chars: int,
    output_tokens: int,
    price_in_per_1k: float,
    price_out_per_1k: float,
    n_items: int,
    wall_time_seconds: Optional[float] = None,
) -> CostEstimate:
    """Project the per-item and total cost of classifying n_items inputs."""
    if price_in_per_1k < 0 or price_out_per_1k < 0:
        raise ValueError("prices must be non-negative")
    input_tokens = estimate_tokens(avg_chars)
    input_cost = input_tokens / 1000.0 * price_in_per_1k
    output_cost = output_tokens / 1000.0 * price_out_per_1k
    per_item = input_cost + output_cost
    return CostEstimate(
        model_tag=model_tag,
        avg_chars=avg_chars,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        price_in_per_1k=price_in_per_1k,
        price_out_per_1k=price_out_per_1k,
        input_cost_per_item=input_cost,
        output_cost_per_item=output_cost,
        cost_per_item=per_item,
        n_items=n_items,
        total_cost=per_item * n_items,
        wall_time_seconds=wall_time_seconds,
    )
