"""Fusion of similarity and causality into ranked correlation scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "CorrelationScore",
    "SelectionPolicy",
    "scale_causality",
    "correlation_score",
    "rank_candidates",
    "select_root_causes",
]


@dataclass(frozen=True)
class CorrelationScore:
    """Per-candidate scores; ``combined`` is the lambda-weighted sum of the
    similarity and the cohort-scaled causality."""

    kpi_id: str
    similarity: float
    causality_raw: float
    causality_scaled: float
    combined: float
    rank: int = 0


@dataclass(frozen=True)
class SelectionPolicy:
    """How the predicted root-cause set is cut from the ranking."""

    mode: str = "relative_threshold"
    k: int = 5
    theta: float = 0.8

    def __post_init__(self) -> None:
        if self.mode not in ("top_k", "relative_threshold"):
            raise ParameterError(f"unknown selection mode {self.mode!r}")
        if self.mode == "top_k" and self.k <= 0:
            raise ParameterError(f"k must be positive, got {self.k}")
        if self.mode == "relative_threshold" and not 0.0 < self.theta <= 1.0:
            raise ParameterError(f"theta must be in (0, 1], got {self.theta}")


def scale_causality(f_values: np.ndarray | list[float]) -> np.ndarray:
    """Min-max scale raw F values across the cohort into [0, 1].

    An all-equal cohort (including a single candidate) maps to 0.5 so the
    causality term stays uninformative rather than arbitrary.
    """
    values = np.asarray(f_values, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    if np.any(values < 0):
        raise ParameterError("raw F values must be >= 0")
    low, high = float(values.min()), float(values.max())
    if high - low <= 0.0:
        return np.full(values.size, 0.5)
    return (values - low) / (high - low)


def correlation_score(similarity: float, causality_scaled: float, lam: float) -> float:
    """Weighted sum ``lam * similarity + (1 - lam) * causality``."""
    for name, value in (("similarity", similarity), ("causality_scaled", causality_scaled), ("lambda", lam)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError(f"{name} must be in [0, 1], got {value}")
    return lam * similarity + (1.0 - lam) * causality_scaled


def rank_candidates(scores: list[CorrelationScore]) -> list[CorrelationScore]:
    """Descending by combined score; ties broken by similarity, then id."""
    ordered = sorted(scores, key=lambda s: (-s.combined, -s.similarity, s.kpi_id))
    return [
        CorrelationScore(
            kpi_id=s.kpi_id,
            similarity=s.similarity,
            causality_raw=s.causality_raw,
            causality_scaled=s.causality_scaled,
            combined=s.combined,
            rank=i + 1,
        )
        for i, s in enumerate(ordered)
    ]


def select_root_causes(ranked: list[CorrelationScore], policy: SelectionPolicy) -> list[str]:
    """Cut the predicted set: the top k, or everything within theta of the max."""
    if not ranked:
        raise ParameterError("ranking is empty")
    if policy.mode == "top_k":
        return [s.kpi_id for s in ranked[: policy.k]]
    cutoff = policy.theta * ranked[0].combined
    return [s.kpi_id for s in ranked if s.combined >= cutoff]
