"""Ranking and detection quality metrics.

Hit@k normalizes by ``min(k, |truth|)`` (the recoverable fraction), NDCG uses
binary gains with a log2 position discount, and the point-adjusted detection
F1 credits a whole labeled window once any flag lands inside it while
counting precision point-wise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = [
    "RcaGroundTruth",
    "MetricReport",
    "precision_recall_f1",
    "hit_rate_at_k",
    "ndcg_at_k",
    "point_adjusted_f1",
    "evaluate_ranking",
]


@dataclass(frozen=True)
class RcaGroundTruth:
    """Labeled root causes for one incident."""

    incident_id: str
    root_cause_ids: frozenset[str]

    def __post_init__(self) -> None:
        ids = frozenset(self.root_cause_ids)
        if not ids:
            raise ParameterError(f"incident {self.incident_id!r}: empty root-cause set")
        object.__setattr__(self, "root_cause_ids", ids)


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    hit_at_k: dict[int, float] = field(default_factory=dict)
    ndcg_at_k: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "hit_at_k": {str(k): v for k, v in sorted(self.hit_at_k.items())},
            "ndcg_at_k": {str(k): v for k, v in sorted(self.ndcg_at_k.items())},
        }


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(predicted: set[str], truth: set[str]) -> tuple[float, float, float]:
    """Standard set-wise precision/recall/F1; empty predictions score 0 precision."""
    if not truth:
        raise ParameterError("truth set must be nonempty")
    tp = len(set(predicted) & set(truth))
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(truth)
    return precision, recall, _f1(precision, recall)


def hit_rate_at_k(ranked: list[str], truth: set[str], k: int) -> float:
    """Fraction of recoverable root causes found in the top k."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    hits = len(set(ranked[:k]) & set(truth))
    return hits / min(k, len(truth)) if truth else 0.0


def ndcg_at_k(ranked: list[str], truth: set[str], k: int) -> float:
    """Binary-gain NDCG with a log2(position + 1) discount."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    truth = set(truth)
    gains = np.array([1.0 if item in truth else 0.0 for item in ranked[:k]])
    discounts = 1.0 / np.log2(np.arange(2, gains.size + 2))
    dcg = float((gains * discounts).sum())
    ideal_hits = min(k, len(truth))
    if ideal_hits == 0:
        return 0.0
    idcg = float((1.0 / np.log2(np.arange(2, ideal_hits + 2))).sum())
    return dcg / idcg


def point_adjusted_f1(
    flagged: np.ndarray | set[int],
    labeled_segments: list[tuple[int, int]],
) -> tuple[float, float, float]:
    """Detection quality against labeled half-open windows.

    Recall is segment-level (a window counts once any flag falls inside);
    precision is point-wise (a flag outside every window is a false positive).
    """
    flags = np.asarray(sorted(flagged), dtype=np.int64)
    if not labeled_segments:
        raise ParameterError("need at least one labeled segment")
    inside = np.zeros(flags.size, dtype=bool)
    detected = 0
    for start, end in labeled_segments:
        member = (flags >= start) & (flags < end)
        inside |= member
        if member.any():
            detected += 1
    recall = detected / len(labeled_segments)
    precision = float(inside.sum() / flags.size) if flags.size else 0.0
    return precision, recall, _f1(precision, recall)


def evaluate_ranking(
    ranked: list[str],
    predicted: set[str],
    truth: RcaGroundTruth,
    ks: tuple[int, ...] = (5, 10),
) -> MetricReport:
    """Bundle the ranking metrics for one incident."""
    precision, recall, f1 = precision_recall_f1(predicted, set(truth.root_cause_ids))
    return MetricReport(
        precision=precision,
        recall=recall,
        f1=f1,
        hit_at_k={k: hit_rate_at_k(ranked, set(truth.root_cause_ids), k) for k in ks},
        ndcg_at_k={k: ndcg_at_k(ranked, set(truth.root_cause_ids), k) for k in ks},
    )
