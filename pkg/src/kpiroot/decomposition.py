"""Additive seasonal/trend/residual decomposition via iterated loess.

The smoother fits a local weighted polynomial (degree 0 or 1) at every sample
using tricube neighborhood weights; neighborhoods shrink asymmetrically at the
series boundaries instead of padding. The decomposition follows the classic
iterated scheme: smooth each cycle-subseries of the detrended input, remove
the low-frequency leakage with a moving-average + loess low-pass, then refit
the trend on the deseasonalized series. Outer passes downweight outliers with
bisquare robustness weights so spikes land in the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InsufficientDataError, ParameterError
from .series import KpiSeries

__all__ = [
    "Decomposition",
    "StlConfig",
    "loess_smooth",
    "stl_decompose",
    "default_trend_window",
]


@dataclass(frozen=True)
class Decomposition:
    """Trend + seasonal + residual split; residual is the exact remainder."""

    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


@dataclass(frozen=True)
class StlConfig:
    """Decomposition parameters.

    ``seasonal_window`` is the loess span over cycle-subseries (in cycles),
    ``trend_window`` the loess span over samples (None picks the standard
    heuristic from the period and seasonal window).
    """

    period: int
    seasonal_window: int = 7
    trend_window: int | None = None
    inner_iterations: int = 2
    outer_iterations: int = 1

    def __post_init__(self) -> None:
        if self.period < 2:
            raise ParameterError(f"period must be >= 2, got {self.period}")
        if self.seasonal_window < 3 or self.seasonal_window % 2 == 0:
            raise ParameterError(f"seasonal_window must be odd and >= 3, got {self.seasonal_window}")
        if self.trend_window is not None and (self.trend_window < 3 or self.trend_window % 2 == 0):
            raise ParameterError(f"trend_window must be odd and >= 3, got {self.trend_window}")
        if self.inner_iterations < 1:
            raise ParameterError("inner_iterations must be >= 1")
        if self.outer_iterations < 0:
            raise ParameterError("outer_iterations must be >= 0")


def default_trend_window(period: int, seasonal_window: int = 7) -> int:
    """Smallest odd integer >= 1.5 * period / (1 - 1.5 / seasonal_window)."""
    raw = 1.5 * period / (1.0 - 1.5 / seasonal_window)
    span = int(np.ceil(raw))
    return span if span % 2 == 1 else span + 1


def _tricube(dist: np.ndarray, dmax: float) -> np.ndarray:
    t = np.clip(np.abs(dist) / dmax, 0.0, 1.0)
    return (1.0 - t**3) ** 3


def _fit_at_zero(u: np.ndarray, y: np.ndarray, w: np.ndarray, degree: int) -> float:
    """Weighted polynomial fit over offsets ``u``, evaluated at u = 0."""
    sw = w.sum()
    if sw <= 0.0:
        # All robustness weights vanished in this window; fall back to a
        # plain mean so the smoother stays total.
        return float(y.mean())
    swy = (w * y).sum()
    if degree == 0:
        return float(swy / sw)
    swu = (w * u).sum()
    swuu = (w * u * u).sum()
    swuy = (w * u * y).sum()
    denom = sw * swuu - swu * swu
    if denom <= 1e-12 * max(sw * swuu, 1e-300):
        return float(swy / sw)
    return float((swy * swuu - swu * swuy) / denom)


def loess_smooth(
    y: np.ndarray,
    span: int,
    degree: int = 1,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Locally weighted polynomial smoothing on a uniform grid.

    ``span`` is the odd neighborhood size in samples; ``weights`` are optional
    per-point robustness multipliers applied on top of the tricube kernel.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if span % 2 == 0 or span > n or span < 1:
        raise ParameterError(f"span must be odd and in [1, {n}], got {span}")
    if degree not in (0, 1):
        raise ParameterError(f"degree must be 0 or 1, got {degree}")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.size != n:
            raise ParameterError("weights length must match input length")
    if span == 1:
        return y.copy()

    half = span // 2
    out = np.empty(n)

    # Interior points share one symmetric tricube kernel; vectorize them.
    u = np.arange(-half, half + 1, dtype=np.float64)
    kernel = _tricube(u, float(half))
    n_rows = n - span + 1
    if n_rows > 0:
        windows = sliding_window_view(y, span)
        if weights is None:
            # Symmetric kernel: odd moments vanish, so the degree-1 fit at the
            # window center reduces to a kernel average (same as degree 0).
            out[half : half + n_rows] = (windows @ kernel) / kernel.sum()
        else:
            w = kernel[None, :] * sliding_window_view(weights, span)
            sw = w.sum(axis=1)
            swy = (w * windows).sum(axis=1)
            safe_sw = np.where(sw == 0.0, 1.0, sw)
            if degree == 0:
                est = swy / safe_sw
            else:
                swu = w @ u
                swuu = w @ (u * u)
                swuy = (w * windows) @ u
                denom = sw * swuu - swu * swu
                closed = (swy * swuu - swu * swuy) / np.where(denom == 0.0, 1.0, denom)
                est = np.where(denom > 1e-12 * np.maximum(sw * swuu, 1e-300), closed, swy / safe_sw)
            bad = sw <= 0.0
            if np.any(bad):
                est[bad] = windows[bad].mean(axis=1)
            out[half : half + n_rows] = est

    # Boundary points get shrunken asymmetric neighborhoods (no padding).
    for i in range(min(half, n)):
        ui = np.arange(span, dtype=np.float64) - i
        wi = _tricube(ui, float(span - 1 - i))
        if weights is not None:
            wi = wi * weights[:span]
        out[i] = _fit_at_zero(ui, y[:span], wi, degree)
    for i in range(max(n - half, half), n):
        ui = np.arange(n - span, n, dtype=np.float64) - i
        wi = _tricube(ui, float(i - (n - span)))
        if weights is not None:
            wi = wi * weights[n - span :]
        out[i] = _fit_at_zero(ui, y[n - span :], wi, degree)
    return out


def _loess_extrapolate(y: np.ndarray, x_eval: float, span: int, weights: np.ndarray | None) -> float:
    """Evaluate the boundary-local linear fit at an off-grid position."""
    n = y.size
    span = min(span, n)
    if x_eval < 0:
        idx = np.arange(span)
    else:
        idx = np.arange(n - span, n)
    u = idx.astype(np.float64) - x_eval
    dmax = float(np.abs(u).max())
    if dmax == 0.0 or span == 1:
        return float(y[idx[0]])
    w = _tricube(u, dmax)
    if weights is not None:
        w = w * weights[idx]
    return _fit_at_zero(u, y[idx], w, 1 if span >= 2 else 0)


def _smooth_cycle_subseries(
    detrended: np.ndarray,
    period: int,
    seasonal_window: int,
    weights: np.ndarray | None,
) -> np.ndarray:
    """Loess-smooth each phase's subseries; extend one cycle at both ends."""
    n = detrended.size
    extended = np.empty(n + 2 * period)
    for phase in range(period):
        sub = detrended[phase::period]
        sub_w = weights[phase::period] if weights is not None else None
        length = sub.size
        span = seasonal_window if seasonal_window <= length else (length if length % 2 == 1 else length - 1)
        span = max(span, 1)
        smoothed = loess_smooth(sub, span, degree=1, weights=sub_w)
        positions = phase + period * (np.arange(length) + 1)
        extended[positions] = smoothed
        extended[phase] = _loess_extrapolate(sub, -1.0, span, sub_w)
        extended[phase + period * (length + 1)] = _loess_extrapolate(sub, float(length), span, sub_w)
    return extended


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    csum = np.concatenate(([0.0], np.cumsum(x)))
    return (csum[width:] - csum[:-width]) / width


def _lowpass(extended: np.ndarray, period: int, n: int) -> np.ndarray:
    """Two period-length moving averages, one of length 3, then a loess pass."""
    x = _moving_average(extended, period)
    x = _moving_average(x, period)
    x = _moving_average(x, 3)
    assert x.size == n
    span = period + 1 if period % 2 == 0 else period + 2
    span = min(span, n if n % 2 == 1 else n - 1)
    return loess_smooth(x, max(span, 1), degree=1)


def _bisquare_weights(residual: np.ndarray) -> np.ndarray:
    h = 6.0 * np.median(np.abs(residual))
    if h <= 1e-300:
        return np.ones_like(residual)
    t = np.clip(np.abs(residual) / h, 0.0, 1.0)
    return (1.0 - t * t) ** 2


def stl_decompose(series: KpiSeries | np.ndarray, cfg: StlConfig) -> Decomposition:
    """Decompose into trend, seasonal and residual components.

    Requires at least two full cycles. The seasonal component is de-meaned
    over the whole series; the residual is defined as the exact remainder so
    reconstruction is an identity.
    """
    y = series.values if isinstance(series, KpiSeries) else np.asarray(series, dtype=np.float64)
    n = y.size
    if n < 2 * cfg.period:
        raise InsufficientDataError(f"need n >= 2 * period = {2 * cfg.period}, got {n}")
    trend_span = cfg.trend_window if cfg.trend_window is not None else default_trend_window(cfg.period, cfg.seasonal_window)
    trend_span = min(trend_span, n if n % 2 == 1 else n - 1)

    trend = np.zeros(n)
    seasonal = np.zeros(n)
    robustness: np.ndarray | None = None
    for outer in range(cfg.outer_iterations + 1):
        for _ in range(cfg.inner_iterations):
            extended = _smooth_cycle_subseries(y - trend, cfg.period, cfg.seasonal_window, robustness)
            seasonal = extended[cfg.period : cfg.period + n] - _lowpass(extended, cfg.period, n)
            seasonal -= seasonal.mean()
            trend = loess_smooth(y - seasonal, trend_span, degree=1, weights=robustness)
        if outer < cfg.outer_iterations:
            robustness = _bisquare_weights(y - trend - seasonal)
    return Decomposition(trend=trend, seasonal=seasonal, residual=y - trend - seasonal, period=cfg.period)
