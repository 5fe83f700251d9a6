"""Root cause localization for aggregate KPI anomalies.

The pipeline detects anomaly segments on a decomposed alarm series, encodes
every series into trend-aware symbols over the anomalous window, and ranks
candidates by a weighted sum of multiset Jaccard similarity and a
Granger-style causality F-statistic.
"""

from .causality import ArFit, GrangerResult, causality_score, fit_ar, fit_arx, granger_f
from .datagen import ANOMALY_KINDS, LabeledDataset, ScenarioSpec, generate_scenario, inject_anomaly, write_dataset
from .decomposition import Decomposition, StlConfig, loess_smooth, stl_decompose
from .detection import (
    AnomalySegment,
    DetectorConfig,
    MlpAutoencoder,
    ReconstructionDetector,
    detect_component_anomalies,
    detect_trend_overload,
    fuse_anomaly_indices,
    robust_sigma_detect,
    sample_indices_to_paa,
    segments_from_indices,
    train_reconstruction_detector,
    trend_ratio_scores,
)
from .errors import IngestionError, InsufficientDataError, KpirootError, ParameterError
from .evaluation import (
    MetricReport,
    RcaGroundTruth,
    evaluate_ranking,
    hit_rate_at_k,
    ndcg_at_k,
    point_adjusted_f1,
    precision_recall_f1,
)
from .pipeline import DetectionArtifacts, RunConfig, detect_alarm_anomalies, fuse_detection, localize, report_content_hash
from .scoring import CorrelationScore, SelectionPolicy, correlation_score, rank_candidates, scale_causality, select_root_causes
from .series import KpiSeries, NormalizedSeries, PaaVector, TrendSigns, default_paa_size, paa, read_kpi_csv, trend_signs, write_kpi_csv, znormalize
from .symbolic import Breakpoints, IsaxSequence, gaussian_breakpoints, isax_symbolize, jaccard_similarity, sax_symbolize

__version__ = "0.1.0"
