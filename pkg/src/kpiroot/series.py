"""Core series representation: normalization, piecewise aggregation, trend signs.

A monitoring series is reduced in three steps before any symbolic analysis:
z-normalization, piecewise aggregate approximation (PAA) into ``w`` segment
means, and per-segment slope signs taken from the segment endpoints. All
functions here are pure and operate on float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, ParameterError

__all__ = [
    "KpiSeries",
    "NormalizedSeries",
    "PaaVector",
    "TrendSigns",
    "znormalize",
    "paa",
    "trend_signs",
    "default_paa_size",
    "read_kpi_csv",
    "write_kpi_csv",
]

# Relative std below which a series is treated as constant (exact zeros after
# normalization, source_std recorded as 0).
_DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class KpiSeries:
    """A uniformly sampled real-valued monitoring series.

    Values must be finite; ``interval`` is the constant sampling period in
    seconds and ``start_time`` the epoch timestamp of the first sample.
    """

    id: str
    start_time: int
    interval: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ParameterError(f"series {self.id!r}: need at least 2 samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ParameterError(f"series {self.id!r}: non-finite value at index {bad}")
        if self.interval <= 0:
            raise ParameterError(f"series {self.id!r}: interval must be > 0, got {self.interval}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time + self.interval * np.arange(self.values.size, dtype=np.int64)


@dataclass(frozen=True)
class NormalizedSeries:
    """Z-scored values together with the source statistics used to scale them."""

    values: np.ndarray
    source_mean: float
    source_std: float


@dataclass(frozen=True)
class PaaVector:
    """Piecewise aggregate approximation: ``w`` contiguous segment means.

    ``segment_starts[j]:segment_ends[j]`` is the half-open source index range
    of segment ``j``; segments partition ``[0, n)`` with sizes differing by at
    most one (longer segments first when ``n % w != 0``).
    """

    values: np.ndarray
    w: int
    n: int
    segment_starts: np.ndarray = field(repr=False)
    segment_ends: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class TrendSigns:
    """Per-segment slope signs in {-1, 0, +1}, aligned with a PaaVector."""

    signs: np.ndarray


def znormalize(series: KpiSeries | np.ndarray) -> NormalizedSeries:
    """Scale to zero mean and unit standard deviation (population convention).

    A constant series maps to all zeros with ``source_std`` recorded as 0 so
    that the downstream pipeline stays total.
    """
    values = series.values if isinstance(series, KpiSeries) else np.asarray(series, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std())
    if std <= _DEGENERATE_STD * max(1.0, abs(mean)):
        return NormalizedSeries(values=np.zeros_like(values), source_mean=mean, source_std=0.0)
    return NormalizedSeries(values=(values - mean) / std, source_mean=mean, source_std=std)


def _segment_bounds(n: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Balanced contiguous partition: first ``n % w`` segments get the extra sample."""
    base, extra = divmod(n, w)
    sizes = np.full(w, base, dtype=np.int64)
    sizes[:extra] += 1
    ends = np.cumsum(sizes)
    starts = ends - sizes
    return starts, ends


def paa(series: NormalizedSeries | np.ndarray, w: int) -> PaaVector:
    """Reduce a series to ``w`` contiguous segment means."""
    values = series.values if isinstance(series, NormalizedSeries) else np.asarray(series, dtype=np.float64)
    n = values.size
    if not 1 <= w <= n:
        raise ParameterError(f"paa: w must be in [1, {n}], got {w}")
    starts, ends = _segment_bounds(n, w)
    if n % w == 0:
        means = values.reshape(w, n // w).mean(axis=1)
    else:
        means = np.add.reduceat(values, starts) / (ends - starts)
    return PaaVector(values=means, w=w, n=n, segment_starts=starts, segment_ends=ends)


def trend_signs(raw: np.ndarray | NormalizedSeries, paa_vec: PaaVector) -> TrendSigns:
    """Sign of (last sample - first sample) within each PAA segment."""
    values = raw.values if isinstance(raw, NormalizedSeries) else np.asarray(raw, dtype=np.float64)
    if values.size != paa_vec.n:
        raise ParameterError(f"trend_signs: raw length {values.size} != paa source length {paa_vec.n}")
    delta = values[paa_vec.segment_ends - 1] - values[paa_vec.segment_starts]
    return TrendSigns(signs=np.sign(delta).astype(np.int64))


def default_paa_size(n: int) -> int:
    """Default symbol count: round(sqrt(n)), clipped to [1, n]."""
    return int(min(max(1, round(np.sqrt(n))), n))


def read_kpi_csv(path: str | Path, series_id: str | None = None) -> KpiSeries:
    """Parse a per-series CSV (``timestamp,value`` header, constant stride).

    Raises IngestionError with the offending line number on malformed rows,
    non-monotonic timestamps, or varying stride.
    """
    path = Path(path)
    sid = series_id if series_id is not None else path.stem
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip().lower() != "timestamp,value":
        raise IngestionError(f"{path}:1: expected header 'timestamp,value'")
    timestamps: list[int] = []
    values: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise IngestionError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
        try:
            ts = int(parts[0])
            val = float(parts[1])
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
        if not np.isfinite(val):
            raise IngestionError(f"{path}:{lineno}: non-finite value {parts[1]!r}")
        timestamps.append(ts)
        values.append(val)
    if len(values) < 2:
        raise IngestionError(f"{path}: need at least 2 data rows, got {len(values)}")
    stride = timestamps[1] - timestamps[0]
    if stride <= 0:
        raise IngestionError(f"{path}:3: timestamps not strictly increasing")
    for i in range(1, len(timestamps)):
        if timestamps[i] - timestamps[i - 1] != stride:
            raise IngestionError(f"{path}:{i + 2}: timestamp stride changed (expected {stride})")
    return KpiSeries(id=sid, start_time=timestamps[0], interval=stride, values=np.array(values))


def write_kpi_csv(series: KpiSeries, path: str | Path) -> None:
    """Write a series in the per-series CSV format read by read_kpi_csv."""
    ts = series.timestamps
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,value\n")
        fh.writelines(f"{int(t)},{float(v)!r}\n" for t, v in zip(ts, series.values))
