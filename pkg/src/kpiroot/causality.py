"""Granger-style causality scoring between candidate and alarm PAA vectors.

Two nested least-squares autoregressions are fit over an anomaly segment: the
alarm on its own lags, and the alarm on its own lags plus the candidate's
lags. The F-statistic on the residual-sum reduction measures how much the
candidate's history helps predict the alarm; larger means more causal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detection import AnomalySegment
from .errors import InsufficientDataError, ParameterError
from .series import PaaVector

__all__ = ["ArFit", "GrangerResult", "fit_ar", "fit_arx", "granger_f", "causality_score", "F_MAX"]

F_MAX = 1e6  # cap for a perfect unrestricted fit over an imperfect restricted one
_ZERO_RSS = 1e-12
_COND_LIMIT = 1e12
_RIDGE = 1e-8


@dataclass(frozen=True)
class ArFit:
    """One least-squares autoregression: coefficients are [intercept,
    own-lag 1..q] plus, for the augmented model, [exogenous-lag 1..q]."""

    order: int
    coefficients: np.ndarray
    residuals: np.ndarray
    rss: float


@dataclass(frozen=True)
class GrangerResult:
    f_statistic: float
    df1: int
    df2: int
    restricted_rss: float
    unrestricted_rss: float


def _ols(design: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Normal-equation least squares with a Tikhonov fallback on
    ill-conditioned Gram matrices (collinear lags, constant segments)."""
    gram = design.T @ design
    moment = design.T @ target
    if not np.isfinite(gram).all():
        raise ParameterError("non-finite values in regression design")
    if np.linalg.cond(gram) > _COND_LIMIT:
        gram = gram + (_RIDGE * np.trace(gram)) * np.eye(gram.shape[0])
    try:
        beta = np.linalg.solve(gram, moment)
    except np.linalg.LinAlgError:
        gram = gram + (_RIDGE * max(np.trace(gram), 1.0)) * np.eye(gram.shape[0])
        beta = np.linalg.solve(gram, moment)
    residuals = target - design @ beta
    return beta, residuals, float(residuals @ residuals)


def _lag_matrix(values: np.ndarray, q: int) -> np.ndarray:
    n = values.size
    return np.column_stack([values[q - j : n - j] for j in range(1, q + 1)])


def fit_ar(y: np.ndarray, q: int) -> ArFit:
    """OLS of y_t on [1, y_{t-1}, ..., y_{t-q}] over t = q..end."""
    y = np.asarray(y, dtype=np.float64)
    if q < 1:
        raise ParameterError(f"order q must be >= 1, got {q}")
    if y.size <= 2 * q + 1:
        raise InsufficientDataError(f"segment length {y.size} too short for order {q}")
    design = np.column_stack([np.ones(y.size - q), _lag_matrix(y, q)])
    beta, residuals, rss = _ols(design, y[q:])
    return ArFit(order=q, coefficients=beta, residuals=residuals, rss=rss)


def fit_arx(y: np.ndarray, x: np.ndarray, q: int) -> ArFit:
    """OLS of y_t on [1, own lags 1..q, exogenous lags 1..q]."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.size != y.size:
        raise ParameterError(f"aligned segments required, got {y.size} and {x.size}")
    if q < 1:
        raise ParameterError(f"order q must be >= 1, got {q}")
    if y.size <= 2 * q + 1:
        raise InsufficientDataError(f"segment length {y.size} too short for order {q}")
    design = np.column_stack([np.ones(y.size - q), _lag_matrix(y, q), _lag_matrix(x, q)])
    beta, residuals, rss = _ols(design, y[q:])
    return ArFit(order=q, coefficients=beta, residuals=residuals, rss=rss)


def granger_f(
    y_alarm: PaaVector | np.ndarray,
    x_candidate: PaaVector | np.ndarray,
    segment: AnomalySegment,
    q: int,
    restricted: ArFit | None = None,
) -> GrangerResult:
    """F-statistic for the candidate's lags over the segment ``[t_s, t_e)``.

    ``restricted`` lets callers reuse the alarm-only fit across candidates.
    Degenerate perfect fits map to 0 (both models perfect) or F_MAX (only the
    augmented model perfect) so the ranking stays total.
    """
    y = y_alarm.values if isinstance(y_alarm, PaaVector) else np.asarray(y_alarm, dtype=np.float64)
    x = x_candidate.values if isinstance(x_candidate, PaaVector) else np.asarray(x_candidate, dtype=np.float64)
    length = segment.t_e - segment.t_s
    df2 = length - 2 * q - 1
    if df2 < 1:
        raise InsufficientDataError(f"segment length {length} gives df2 = {df2} < 1 for q = {q}")
    if segment.t_e > y.size or segment.t_e > x.size:
        raise ParameterError(f"segment [{segment.t_s}, {segment.t_e}) exceeds series length")
    ys = y[segment.t_s : segment.t_e]
    xs = x[segment.t_s : segment.t_e]
    if restricted is None or restricted.order != q:
        restricted = fit_ar(ys, q)
    unrestricted = fit_arx(ys, xs, q)
    rss_r, rss_u = restricted.rss, unrestricted.rss
    if rss_u < _ZERO_RSS:
        f_stat = 0.0 if rss_r < _ZERO_RSS else F_MAX
    else:
        f_stat = max(0.0, (rss_r - rss_u) / q / (rss_u / df2))
        f_stat = min(f_stat, F_MAX)
    return GrangerResult(
        f_statistic=f_stat,
        df1=q,
        df2=df2,
        restricted_rss=rss_r,
        unrestricted_rss=rss_u,
    )


def causality_score(
    y_alarm: PaaVector | np.ndarray,
    x_candidate: PaaVector | np.ndarray,
    segments: list[AnomalySegment],
    q: int,
    restricted_fits: list[ArFit | None] | None = None,
) -> float:
    """Max F over the fused segments; segments too short to test score 0."""
    best = 0.0
    for i, segment in enumerate(segments):
        restricted = restricted_fits[i] if restricted_fits is not None else None
        try:
            result = granger_f(y_alarm, x_candidate, segment, q, restricted=restricted)
        except InsufficientDataError:
            continue
        best = max(best, result.f_statistic)
    return best
