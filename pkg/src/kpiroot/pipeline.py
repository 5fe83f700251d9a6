"""End-to-end localization: detection, symbolization, scoring, reporting.

The expensive per-incident work (decomposition plus autoencoder training on
the alarm components) is isolated in ``detect_alarm_anomalies`` so sweeps
over symbol parameters can reuse it; ``fuse_detection`` then derives the
anomalous PAA index set and F-test segments for a given symbol count, and
``localize`` scores every candidate against the alarm inside that window.

Reports are plain dicts with a stable schema; ``report_content_hash`` covers
everything except wall-clock timings, so determinism can be asserted across
reruns and worker counts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .causality import ArFit, causality_score, fit_ar
from .decomposition import Decomposition, StlConfig, stl_decompose
from .detection import (
    AnomalySegment,
    DetectorConfig,
    ReconstructionDetector,
    detect_component_anomalies,
    detect_trend_overload,
    fuse_anomaly_indices,
    robust_sigma_detect,
    sample_indices_to_paa,
    segments_from_indices,
    train_reconstruction_detector,
)
from .errors import InsufficientDataError, ParameterError
from .scoring import (
    CorrelationScore,
    SelectionPolicy,
    correlation_score,
    rank_candidates,
    scale_causality,
    select_root_causes,
)
from .series import KpiSeries, default_paa_size, paa, trend_signs, znormalize
from .symbolic import Breakpoints, IsaxSequence, gaussian_breakpoints, isax_symbolize, jaccard_similarity, sax_symbolize

__all__ = [
    "RunConfig",
    "DetectionArtifacts",
    "detect_alarm_anomalies",
    "fuse_detection",
    "localize",
    "report_content_hash",
]

log = logging.getLogger("kpiroot")

REPORT_SCHEMA_VERSION = 1

# Seed offsets for the three per-component detectors.
_COMPONENT_SEEDS = {"trend": 0, "seasonal": 1, "residual": 2}

# A trend or seasonal component whose variance is a negligible share of the
# alarm's carries no anomaly information; standardizing it would amplify
# meaningless wiggle, so its detectors are skipped.
_VARIANCE_GATE = 1e-3


@dataclass(frozen=True)
class RunConfig:
    """All pipeline hyperparameters; echoed verbatim into every report."""

    period: int
    w: int | None = None  # None resolves to round(sqrt(n))
    alpha: int = 9
    lam: float = 0.9
    gamma: float = 2.0
    trend_lags: int = 5
    q: int = 3
    seasonal_window: int = 7
    trend_window: int | None = None
    inner_iterations: int = 2
    outer_iterations: int = 1
    detector_window: int = 32
    seasonal_detector_cap: int = 48
    epochs: int = 300
    learning_rate: float = 0.05
    sigma_k: float = 4.0
    max_gap: int = 2
    detection_mode: str = "decomposition"  # or "trend_only"
    symbol_mode: str = "isax"  # or "sax"
    causality_scaling: str = "minmax"  # or "raw"
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.detection_mode not in ("decomposition", "trend_only"):
            raise ParameterError(f"unknown detection_mode {self.detection_mode!r}")
        if self.symbol_mode not in ("isax", "sax"):
            raise ParameterError(f"unknown symbol_mode {self.symbol_mode!r}")
        if self.causality_scaling not in ("minmax", "raw"):
            raise ParameterError(f"unknown causality_scaling {self.causality_scaling!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must be in [0, 1], got {self.lam}")
        if self.q < 1:
            raise ParameterError(f"q must be >= 1, got {self.q}")
        if self.jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {self.jobs}")

    def resolve_w(self, n: int) -> int:
        return self.w if self.w is not None else default_paa_size(n)

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "w": self.w,
            "alpha": self.alpha,
            "lam": self.lam,
            "gamma": self.gamma,
            "trend_lags": self.trend_lags,
            "q": self.q,
            "seasonal_window": self.seasonal_window,
            "trend_window": self.trend_window,
            "inner_iterations": self.inner_iterations,
            "outer_iterations": self.outer_iterations,
            "detector_window": self.detector_window,
            "seasonal_detector_cap": self.seasonal_detector_cap,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "sigma_k": self.sigma_k,
            "max_gap": self.max_gap,
            "detection_mode": self.detection_mode,
            "symbol_mode": self.symbol_mode,
            "causality_scaling": self.causality_scaling,
            "policy": {"mode": self.policy.mode, "k": self.policy.k, "theta": self.policy.theta},
            "seed": self.seed,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "RunConfig":
        blob = dict(blob)
        policy = blob.pop("policy", None)
        if policy is not None:
            blob["policy"] = SelectionPolicy(**policy)
        return cls(**blob)


@dataclass
class DetectionArtifacts:
    """Heavy per-incident detection state, reusable across symbol sweeps."""

    decomposition: Decomposition | None
    ae_indices: dict[str, np.ndarray]
    sigma_indices: np.ndarray
    detectors: dict[str, ReconstructionDetector]
    timings: dict[str, float]


def _detector_config(cfg: RunConfig, component: str, window_length: int) -> DetectorConfig:
    return DetectorConfig(
        seed=cfg.seed + _COMPONENT_SEEDS[component],
        gamma=cfg.gamma,
        lag_l=cfg.trend_lags,
        sigma_k=cfg.sigma_k,
        window_length=window_length,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
    )


def detect_alarm_anomalies(alarm: KpiSeries, cfg: RunConfig) -> DetectionArtifacts:
    """Decompose the alarm and flag anomalous samples on each component.

    In trend_only mode this is a no-op placeholder; the window-ratio rule is
    applied later (it depends on the PAA size, which sweeps may change).
    """
    empty = np.empty(0, dtype=np.int64)
    if cfg.detection_mode == "trend_only":
        return DetectionArtifacts(None, {"trend": empty, "seasonal": empty, "residual": empty}, empty, {}, {})

    start = time.perf_counter()
    decomposition = stl_decompose(
        alarm.values,
        StlConfig(
            period=cfg.period,
            seasonal_window=cfg.seasonal_window,
            trend_window=cfg.trend_window,
            inner_iterations=cfg.inner_iterations,
            outer_iterations=cfg.outer_iterations,
        ),
    )
    t_decompose = time.perf_counter() - start

    start = time.perf_counter()
    n = len(alarm)
    alarm_var = float(alarm.values.var())
    seasonal_window_length = max(4, min(cfg.period, cfg.seasonal_detector_cap))
    components = {
        "trend": (decomposition.trend, cfg.detector_window),
        "seasonal": (decomposition.seasonal, seasonal_window_length),
        "residual": (decomposition.residual, cfg.detector_window),
    }
    detectors: dict[str, ReconstructionDetector] = {}
    ae_indices: dict[str, np.ndarray] = {}
    for name, (values, window_length) in components.items():
        if name != "residual" and alarm_var > 0 and float(values.var()) < _VARIANCE_GATE * alarm_var:
            log.info("component %s carries %.2e of the alarm variance; detector skipped", name, values.var())
            ae_indices[name] = np.empty(0, dtype=np.int64)
            continue
        detector = train_reconstruction_detector(values, _detector_config(cfg, name, window_length))
        detectors[name] = detector
        indices = detect_component_anomalies(values, detector)
        if name == "seasonal":
            # Cycle-subseries loess is biased within the first and last cycle;
            # flags there are boundary artifacts, not anomalies.
            margin = cfg.period + window_length
            indices = indices[(indices >= margin) & (indices < n - margin)]
        ae_indices[name] = indices
    sigma_indices = robust_sigma_detect(decomposition.residual, k=cfg.sigma_k)
    t_detect = time.perf_counter() - start
    return DetectionArtifacts(
        decomposition=decomposition,
        ae_indices=ae_indices,
        sigma_indices=sigma_indices,
        detectors=detectors,
        timings={"decompose": t_decompose, "detect": t_detect},
    )


def fuse_detection(
    alarm: KpiSeries,
    artifacts: DetectionArtifacts,
    cfg: RunConfig,
) -> tuple[np.ndarray, list[AnomalySegment], list[AnomalySegment]]:
    """Combine detector outputs into (anomalous PAA indices, F-test segments,
    raw window-ratio segments) for the resolved symbol count."""
    n = len(alarm)
    w = cfg.resolve_w(n)
    alarm_paa = paa(znormalize(alarm.values), w)
    ratio_possible = 2 * cfg.trend_lags <= w
    if not ratio_possible:
        log.warning("w=%d too small for trend ratio with l=%d; skipping ratio detector", w, cfg.trend_lags)

    # The window-sum ratio watches the alarm's own PAA in both modes: the
    # loess-smoothed trend component spreads a step over the ratio window, so
    # applying the rule there would blunt exactly the uprushes it exists for.
    detector_cfg = DetectorConfig(seed=cfg.seed, gamma=cfg.gamma, lag_l=cfg.trend_lags, sigma_k=cfg.sigma_k)
    trend_segments = detect_trend_overload(alarm_paa, detector_cfg) if ratio_possible else []
    ratio_paa = (
        np.unique(np.concatenate([np.arange(s.t_s, s.t_e) for s in trend_segments]).astype(np.int64))
        if trend_segments
        else np.empty(0, dtype=np.int64)
    )
    if cfg.detection_mode == "trend_only":
        fused_paa = ratio_paa
    else:
        sample_union = fuse_anomaly_indices(
            artifacts.ae_indices["trend"],
            artifacts.ae_indices["seasonal"],
            np.union1d(artifacts.ae_indices["residual"], artifacts.sigma_indices),
        )
        mapped = sample_indices_to_paa(sample_union, alarm_paa)
        fused_paa = np.union1d(mapped, ratio_paa).astype(np.int64)
    segments = segments_from_indices(fused_paa, max_gap=cfg.max_gap, min_length=2 * cfg.q + 2, w=w)
    return fused_paa, segments, trend_segments


@dataclass
class _ScoringShared:
    """Everything a worker needs to score a chunk of candidates."""

    w: int
    breakpoints: Breakpoints
    symbol_mode: str
    fused_idx: np.ndarray
    alarm_symbols: IsaxSequence
    alarm_paa_values: np.ndarray
    segments: list[AnomalySegment]
    restricted: list[ArFit | None]
    q: int


def _score_chunk(
    ids: list[str],
    values_list: list[np.ndarray],
    shared: _ScoringShared,
) -> tuple[list[tuple[str, float, float]], dict[str, float]]:
    rows: list[tuple[str, float, float]] = []
    times = {"reduce": 0.0, "symbolize": 0.0, "similarity": 0.0, "causality": 0.0}
    for kpi_id, values in zip(ids, values_list):
        start = time.perf_counter()
        norm = znormalize(values)
        paa_vec = paa(norm, shared.w)
        signs = trend_signs(norm, paa_vec) if shared.symbol_mode == "isax" else None
        mid = time.perf_counter()
        times["reduce"] += mid - start

        window_values = paa_vec.values[shared.fused_idx]
        if signs is not None:
            symbols = isax_symbolize(window_values, signs.signs[shared.fused_idx], shared.breakpoints)
        else:
            symbols = sax_symbolize(window_values, shared.breakpoints)
        now = time.perf_counter()
        times["symbolize"] += now - mid

        similarity = jaccard_similarity(shared.alarm_symbols, symbols)
        mid = time.perf_counter()
        times["similarity"] += mid - now

        raw_f = causality_score(
            shared.alarm_paa_values, paa_vec.values, shared.segments, shared.q, restricted_fits=shared.restricted
        )
        times["causality"] += time.perf_counter() - mid
        rows.append((kpi_id, similarity, raw_f))
    return rows, times


def _chunks(items: list, parts: int) -> list[list]:
    bounds = np.linspace(0, len(items), parts + 1).astype(int)
    return [items[bounds[i] : bounds[i + 1]] for i in range(parts) if bounds[i] < bounds[i + 1]]


def localize(
    alarm: KpiSeries,
    candidates: list[KpiSeries],
    cfg: RunConfig,
    incident_id: str = "adhoc",
    artifacts: DetectionArtifacts | None = None,
) -> dict:
    """Run the full localization and return the report dict.

    ``artifacts`` lets callers reuse a previous detection pass (the heavy
    stage) when only downstream parameters changed.
    """
    if not candidates:
        raise ParameterError("need at least one candidate series")
    n = len(alarm)
    w = cfg.resolve_w(n)
    timings: dict[str, float] = {}

    if artifacts is None:
        artifacts = detect_alarm_anomalies(alarm, cfg)
    timings.update(artifacts.timings)

    start = time.perf_counter()
    fused_idx, segments, trend_segments = fuse_detection(alarm, artifacts, cfg)
    timings["fuse"] = time.perf_counter() - start

    anomaly_detected = fused_idx.size > 0
    if anomaly_detected:
        start = time.perf_counter()
        breakpoints = gaussian_breakpoints(cfg.alpha)
        alarm_norm = znormalize(alarm.values)
        alarm_paa_vec = paa(alarm_norm, w)
        alarm_window = alarm_paa_vec.values[fused_idx]
        if cfg.symbol_mode == "isax":
            alarm_signs = trend_signs(alarm_norm, alarm_paa_vec).signs[fused_idx]
            alarm_symbols = isax_symbolize(alarm_window, alarm_signs, breakpoints)
        else:
            alarm_symbols = sax_symbolize(alarm_window, breakpoints)
        restricted: list[ArFit | None] = []
        for segment in segments:
            try:
                restricted.append(fit_ar(alarm_paa_vec.values[segment.t_s : segment.t_e], cfg.q))
            except InsufficientDataError:
                restricted.append(None)
        shared = _ScoringShared(
            w=w,
            breakpoints=breakpoints,
            symbol_mode=cfg.symbol_mode,
            fused_idx=fused_idx,
            alarm_symbols=alarm_symbols,
            alarm_paa_values=alarm_paa_vec.values,
            segments=segments,
            restricted=restricted,
            q=cfg.q,
        )
        timings["alarm_encode"] = time.perf_counter() - start

        ids = [c.id for c in candidates]
        values_list = [c.values for c in candidates]
        if cfg.jobs > 1 and len(candidates) > 1:
            id_chunks = _chunks(ids, cfg.jobs)
            val_chunks = _chunks(values_list, cfg.jobs)
            rows = []
            times_acc = {"reduce": 0.0, "symbolize": 0.0, "similarity": 0.0, "causality": 0.0}
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                for chunk_rows, chunk_times in pool.map(_score_chunk, id_chunks, val_chunks,
                                                        [shared] * len(id_chunks)):
                    rows.extend(chunk_rows)
                    for key in times_acc:
                        times_acc[key] += chunk_times[key]
        else:
            rows, times_acc = _score_chunk(ids, values_list, shared)
        timings.update(times_acc)

        start = time.perf_counter()
        raw_fs = np.array([row[2] for row in rows])
        scaled = scale_causality(raw_fs)
        scores = []
        for (kpi_id, similarity, raw_f), caus in zip(rows, scaled):
            if cfg.causality_scaling == "raw":
                combined = cfg.lam * similarity + (1.0 - cfg.lam) * raw_f
            else:
                combined = correlation_score(similarity, float(caus), cfg.lam)
            scores.append(
                CorrelationScore(
                    kpi_id=kpi_id,
                    similarity=similarity,
                    causality_raw=float(raw_f),
                    causality_scaled=float(caus),
                    combined=float(combined),
                )
            )
        ranked = rank_candidates(scores)
        predicted = select_root_causes(ranked, cfg.policy)
        timings["score"] = time.perf_counter() - start
    else:
        ranked = rank_candidates(
            [CorrelationScore(kpi_id=c.id, similarity=0.0, causality_raw=0.0, causality_scaled=0.0, combined=0.0)
             for c in candidates]
        )
        predicted = []

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "incident_id": incident_id,
        "anomaly_detected": bool(anomaly_detected),
        "n": n,
        "m": len(candidates),
        "w": w,
        "config": cfg.to_dict(),
        "anomaly_paa_indices": [int(i) for i in fused_idx],
        "segments": [
            {"t_s": s.t_s, "t_e": s.t_e, "kind": s.kind, "score": float(s.score)} for s in segments
        ],
        "trend_rule_segments": [
            {"t_s": s.t_s, "t_e": s.t_e, "kind": s.kind, "score": float(s.score)} for s in trend_segments
        ],
        "candidates": [
            {
                "kpi_id": s.kpi_id,
                "similarity": s.similarity,
                "causality_raw": s.causality_raw,
                "causality_scaled": s.causality_scaled,
                "combined": s.combined,
                "rank": s.rank,
            }
            for s in ranked
        ],
        "predicted_root_causes": predicted,
        "timings": timings,
    }
    report["content_hash"] = report_content_hash(report)
    return report


def report_content_hash(report: dict) -> str:
    """SHA-256 over the canonical report with volatile fields removed."""
    canonical = {k: v for k, v in report.items() if k not in ("timings", "content_hash")}
    return hashlib.sha256(json.dumps(canonical, sort_keys=True).encode("utf-8")).hexdigest()


def trend_only_config(cfg: RunConfig) -> RunConfig:
    """Ablation: detection restricted to the window-ratio rule on the raw alarm."""
    return replace(cfg, detection_mode="trend_only")


def plain_sax_config(cfg: RunConfig) -> RunConfig:
    """Ablation: symbols keep only the level, dropping per-segment trend signs."""
    return replace(cfg, symbol_mode="sax")
