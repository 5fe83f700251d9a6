"""Anomaly detection over decomposed components and their fusion.

Three detectors cooperate: a window-sum ratio that flags sustained uprushes
on the PAA vector, a dense autoencoder with one additive skip connection that
flags windows with high reconstruction error, and a robust median/MAD rule
for point outliers. Their sample-level index sets are unioned, mapped into
PAA coordinates, and merged into contiguous segments sized for the
downstream F-test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InsufficientDataError, ParameterError
from .series import PaaVector

__all__ = [
    "AnomalySegment",
    "DetectorConfig",
    "MlpAutoencoder",
    "ReconstructionDetector",
    "trend_ratio_scores",
    "detect_trend_overload",
    "train_reconstruction_detector",
    "detect_component_anomalies",
    "robust_sigma_detect",
    "fuse_anomaly_indices",
    "sample_indices_to_paa",
    "segments_from_indices",
    "save_detector",
    "load_detector",
]

_MAD_SCALE = 1.4826  # makes MAD a consistent sigma estimate under normality


@dataclass(frozen=True)
class AnomalySegment:
    """Half-open anomalous index interval ``[t_s, t_e)`` in PAA coordinates."""

    t_s: int
    t_e: int
    kind: str
    score: float

    def __post_init__(self) -> None:
        if not 0 <= self.t_s < self.t_e:
            raise ParameterError(f"invalid segment [{self.t_s}, {self.t_e})")

    def length(self) -> int:
        return self.t_e - self.t_s


@dataclass(frozen=True)
class DetectorConfig:
    """Detection thresholds and autoencoder training hyperparameters."""

    seed: int
    gamma: float = 2.0
    lag_l: int = 5
    sigma_k: float = 3.0
    window_length: int = 32
    epochs: int = 300
    learning_rate: float = 0.05

    def __post_init__(self) -> None:
        if self.gamma <= 1.0:
            raise ParameterError(f"gamma must be > 1, got {self.gamma}")
        if self.lag_l < 1:
            raise ParameterError(f"lag_l must be >= 1, got {self.lag_l}")
        if self.window_length < 4:
            raise ParameterError(f"window_length must be >= 4, got {self.window_length}")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ParameterError("epochs must be >= 1 and learning_rate > 0")


def trend_ratio_scores(paa_vec: PaaVector | np.ndarray, l: int) -> np.ndarray:
    """Ratio of the next-l window sum to the previous-l window sum.

    Computed on a copy shifted by ``-min + 1`` so every value is >= 1, which
    keeps the ratio a meaningful relative-growth measure for arbitrarily
    scaled or signed inputs. Positions without a full window on both sides
    are NaN; defined entries live at ``l <= i <= w - l``.
    """
    p = paa_vec.values if isinstance(paa_vec, PaaVector) else np.asarray(paa_vec, dtype=np.float64)
    w = p.size
    if l < 1 or 2 * l > w:
        raise ParameterError(f"need 1 <= l and 2*l <= w, got l={l}, w={w}")
    shifted = p - p.min() + 1.0
    csum = np.concatenate(([0.0], np.cumsum(shifted)))
    window = csum[l:] - csum[:-l]  # window[j] = sum of shifted[j : j+l]
    scores = np.full(w, np.nan)
    idx = np.arange(l, w - l + 1)
    scores[idx] = window[idx] / window[idx - l]
    return scores


def detect_trend_overload(paa_vec: PaaVector | np.ndarray, cfg: DetectorConfig) -> list[AnomalySegment]:
    """Open a segment where the ratio exceeds gamma; close at the first
    value that drops below the opening value; never-closing segments run to w."""
    p = paa_vec.values if isinstance(paa_vec, PaaVector) else np.asarray(paa_vec, dtype=np.float64)
    scores = trend_ratio_scores(p, cfg.lag_l)
    w = p.size
    segments: list[AnomalySegment] = []
    i = cfg.lag_l
    while i <= w - cfg.lag_l:
        if np.isnan(scores[i]) or scores[i] <= cfg.gamma:
            i += 1
            continue
        t_s = i
        t_e = w
        for t in range(t_s + 1, w):
            if p[t] < p[t_s]:
                t_e = t
                break
        in_seg = scores[t_s:t_e]
        peak = float(np.nanmax(in_seg)) if np.any(~np.isnan(in_seg)) else float(scores[t_s])
        segments.append(AnomalySegment(t_s=t_s, t_e=t_e, kind="trend", score=peak))
        i = t_e
    return segments


class MlpAutoencoder:
    """Dense encoder-decoder W -> ceil(W/2) -> ceil(W/4) -> ceil(W/2) -> W.

    Hidden layers use tanh, the output is linear, and the first hidden
    activation is added into the pre-activation of the matching decoder
    layer (a single additive skip connection). Gradients are analytic and
    checked against finite differences in the test suite.
    """

    def __init__(self, window_length: int, seed: int, dtype: type = np.float64):
        if window_length < 4:
            raise ParameterError(f"window_length must be >= 4, got {window_length}")
        self.window_length = window_length
        self.dtype = dtype
        h1 = (window_length + 1) // 2
        h2 = (window_length + 3) // 4
        self.sizes = [window_length, h1, h2, h1, window_length]
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            scale = np.sqrt(1.0 / fan_in)
            self.weights.append((rng.standard_normal((fan_in, fan_out)) * scale).astype(dtype))
            self.biases.append(np.zeros(fan_out, dtype=dtype))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        w1, w2, w3, w4 = self.weights
        b1, b2, b3, b4 = self.biases
        h1 = np.tanh(x @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        h3 = np.tanh(h2 @ w3 + b3 + h1)  # additive skip from the first hidden layer
        out = h3 @ w4 + b4
        return out, (x, h1, h2, h3)

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(x, dtype=self.dtype))[0]

    def loss(self, x: np.ndarray) -> float:
        out, _ = self.forward(x)
        diff = out - x
        return float(np.mean(diff * diff))

    def loss_and_grads(self, x: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean squared reconstruction error and its gradients."""
        w2, w3, w4 = self.weights[1], self.weights[2], self.weights[3]
        out, (x, h1, h2, h3) = self.forward(x)
        diff = out - x
        loss = float(np.mean(diff * diff))
        d_out = (2.0 / diff.size) * diff
        g_w4 = h3.T @ d_out
        g_b4 = d_out.sum(axis=0)
        d_z3 = (d_out @ w4.T) * (1.0 - h3 * h3)
        g_w3 = h2.T @ d_z3
        g_b3 = d_z3.sum(axis=0)
        d_z2 = (d_z3 @ w3.T) * (1.0 - h2 * h2)
        g_w2 = h1.T @ d_z2
        g_b2 = d_z2.sum(axis=0)
        d_h1 = d_z2 @ w2.T + d_z3  # second term flows through the skip
        d_z1 = d_h1 * (1.0 - h1 * h1)
        g_w1 = x.T @ d_z1
        g_b1 = d_z1.sum(axis=0)
        return loss, [g_w1, g_w2, g_w3, g_w4], [g_b1, g_b2, g_b3, g_b4]

    def train(
        self,
        x: np.ndarray,
        epochs: int,
        learning_rate: float,
        momentum: float = 0.9,
    ) -> tuple[float, float]:
        """Full-batch gradient descent with heavy-ball momentum.

        Buffers are preallocated and every epoch runs in-place: repeated
        temporary allocation is the dominant cost at these layer sizes.
        Returns (initial, final) loss.
        """
        x = np.ascontiguousarray(x, dtype=self.dtype)
        n_rows = x.shape[0]
        w1, w2, w3, w4 = self.weights
        b1, b2, b3, b4 = self.biases
        d1, d2 = w1.shape[1], w2.shape[1]
        buf = lambda cols: np.empty((n_rows, cols), dtype=self.dtype)
        h1, h2, h3, out = buf(d1), buf(d2), buf(d1), buf(x.shape[1])
        dz1, dz2, dz3 = buf(d1), buf(d2), buf(d1)
        tmp1, tmp2 = buf(d1), buf(d2)
        vel_w = [np.zeros_like(w) for w in self.weights]
        vel_b = [np.zeros_like(b) for b in self.biases]
        g_w = [np.empty_like(w) for w in self.weights]
        g_b = [np.empty_like(b) for b in self.biases]
        scale = 2.0 / x.size

        def forward_inplace() -> None:
            np.matmul(x, w1, out=h1)
            np.add(h1, b1, out=h1)
            np.tanh(h1, out=h1)
            np.matmul(h1, w2, out=h2)
            np.add(h2, b2, out=h2)
            np.tanh(h2, out=h2)
            np.matmul(h2, w3, out=h3)
            np.add(h3, b3, out=h3)
            np.add(h3, h1, out=h3)
            np.tanh(h3, out=h3)
            np.matmul(h3, w4, out=out)
            np.add(out, b4, out=out)

        forward_inplace()
        out -= x
        initial = float(np.mean(out * out))
        final = initial
        for _ in range(epochs):
            forward_inplace()
            out -= x
            final = float(np.mean(out * out))
            out *= scale  # now d_loss/d_output
            np.matmul(h3.T, out, out=g_w[3])
            out.sum(axis=0, out=g_b[3])
            np.matmul(out, w4.T, out=dz3)
            np.square(h3, out=tmp1)
            tmp1 -= 1.0
            tmp1 *= -1.0
            dz3 *= tmp1  # through tanh of the decoder layer
            np.matmul(h2.T, dz3, out=g_w[2])
            dz3.sum(axis=0, out=g_b[2])
            np.matmul(dz3, w3.T, out=dz2)
            np.square(h2, out=tmp2)
            tmp2 -= 1.0
            tmp2 *= -1.0
            dz2 *= tmp2
            np.matmul(h1.T, dz2, out=g_w[1])
            dz2.sum(axis=0, out=g_b[1])
            np.matmul(dz2, w2.T, out=dz1)
            dz1 += dz3  # skip-connection gradient path
            np.square(h1, out=tmp1)
            tmp1 -= 1.0
            tmp1 *= -1.0
            dz1 *= tmp1
            np.matmul(x.T, dz1, out=g_w[0])
            dz1.sum(axis=0, out=g_b[0])
            for weight, vel, grad in zip(self.weights, vel_w, g_w):
                vel *= momentum
                vel -= learning_rate * grad
                weight += vel
            for bias, vel, grad in zip(self.biases, vel_b, g_b):
                vel *= momentum
                vel -= learning_rate * grad
                bias += vel
        return initial, final

    def window_errors(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward(np.asarray(x, dtype=self.dtype))
        diff = out - x
        return np.mean(diff * diff, axis=1)

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def set_parameter_vector(self, vec: np.ndarray) -> None:
        offset = 0
        for arr in self.weights + self.biases:
            arr[...] = vec[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size


@dataclass
class ReconstructionDetector:
    """A trained autoencoder with its error threshold and input statistics."""

    model: MlpAutoencoder
    threshold: float
    error_mean: float
    error_std: float
    input_mean: float
    input_std: float
    initial_loss: float
    final_loss: float
    config: DetectorConfig = field(repr=False)

    @property
    def window_length(self) -> int:
        return self.model.window_length


def _standardize(values: np.ndarray, mean: float, std: float) -> np.ndarray:
    if std <= 0.0:
        return np.zeros_like(values)
    return (values - mean) / std


def train_reconstruction_detector(component: np.ndarray, cfg: DetectorConfig) -> ReconstructionDetector:
    """Fit the autoencoder on all stride-1 windows of a component.

    The component is standardized first (statistics are stored on the
    detector) so the fixed learning rate behaves across scales. The anomaly
    threshold is the training-error mean plus three standard deviations.
    """
    values = np.asarray(component, dtype=np.float64)
    w = cfg.window_length
    if values.size < 2 * w:
        raise InsufficientDataError(f"component length {values.size} < 2 * window_length {2 * w}")
    mean = float(values.mean())
    std = float(values.std())
    scaled = _standardize(values, mean, std)
    windows = np.ascontiguousarray(sliding_window_view(scaled, w))
    model = MlpAutoencoder(w, seed=cfg.seed)
    initial, final = model.train(windows, cfg.epochs, cfg.learning_rate)
    errors = model.window_errors(windows)
    err_mean = float(errors.mean())
    err_std = float(errors.std())
    threshold = err_mean + 3.0 * err_std
    return ReconstructionDetector(
        model=model,
        threshold=threshold,
        error_mean=err_mean,
        error_std=err_std,
        input_mean=mean,
        input_std=std,
        initial_loss=initial,
        final_loss=final,
        config=cfg,
    )


def detect_component_anomalies(component: np.ndarray, detector: ReconstructionDetector) -> np.ndarray:
    """Sample indices covered by at least one window whose error exceeds the
    threshold (max-pooling attribution favors recall)."""
    values = np.asarray(component, dtype=np.float64)
    w = detector.window_length
    if values.size < w:
        raise InsufficientDataError(f"component length {values.size} < window_length {w}")
    scaled = _standardize(values, detector.input_mean, detector.input_std)
    errors = detector.model.window_errors(sliding_window_view(scaled, w))
    flagged = np.flatnonzero(errors > detector.threshold)
    if flagged.size == 0:
        return np.empty(0, dtype=np.int64)
    # Mark [i, i+w) per flagged window via a difference array.
    marks = np.zeros(values.size + 1, dtype=np.int64)
    np.add.at(marks, flagged, 1)
    np.add.at(marks, flagged + w, -1)
    return np.flatnonzero(np.cumsum(marks[:-1]) > 0)


def robust_sigma_detect(component: np.ndarray, k: float = 3.0) -> np.ndarray:
    """Indices where |x - median| exceeds k * 1.4826 * MAD.

    A zero MAD degenerates to flagging any value different from the median.
    """
    values = np.asarray(component, dtype=np.float64)
    if values.size < 3:
        raise ParameterError(f"need at least 3 samples, got {values.size}")
    med = np.median(values)
    dev = np.abs(values - med)
    mad = np.median(dev)
    if mad <= 0.0:
        return np.flatnonzero(dev > 0.0)
    return np.flatnonzero(dev > k * _MAD_SCALE * mad)


def fuse_anomaly_indices(
    trend_idx: np.ndarray,
    seasonal_idx: np.ndarray,
    residual_idx: np.ndarray,
) -> np.ndarray:
    """Sorted union of the per-component anomalous sample indices."""
    merged = np.concatenate(
        [np.asarray(a, dtype=np.int64).ravel() for a in (trend_idx, seasonal_idx, residual_idx)]
    )
    return np.unique(merged)


def sample_indices_to_paa(indices: np.ndarray, paa_vec: PaaVector) -> np.ndarray:
    """Map sample indices to the PAA segments containing them (any-sample rule)."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        return np.empty(0, dtype=np.int64)
    if indices.min() < 0 or indices.max() >= paa_vec.n:
        raise ParameterError("sample index out of range")
    return np.unique(np.searchsorted(paa_vec.segment_ends, indices, side="right"))


def segments_from_indices(
    indices: np.ndarray,
    max_gap: int = 2,
    min_length: int = 2,
    w: int | None = None,
) -> list[AnomalySegment]:
    """Merge sorted PAA indices into segments; gaps of up to ``max_gap``
    missing points are bridged and short segments are extended symmetrically
    to ``min_length`` (bounded by ``[0, w)``), re-merging any overlap."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return []
    bound = w if w is not None else int(idx[-1]) + 1
    raw: list[list[int]] = [[int(idx[0]), int(idx[0]) + 1]]
    for value in idx[1:]:
        if value - (raw[-1][1] - 1) - 1 <= max_gap:
            raw[-1][1] = int(value) + 1
        else:
            raw.append([int(value), int(value) + 1])
    extended: list[list[int]] = []
    for t_s, t_e in raw:
        need = min_length - (t_e - t_s)
        if need > 0:
            left = need // 2
            t_s -= left
            t_e += need - left
            if t_s < 0:
                t_e = min(bound, t_e - t_s)
                t_s = 0
            if t_e > bound:
                t_s = max(0, t_s - (t_e - bound))
                t_e = bound
        if extended and t_s <= extended[-1][1]:
            extended[-1][1] = max(extended[-1][1], t_e)
        else:
            extended.append([t_s, t_e])
    idx_set = set(int(v) for v in idx)
    out = []
    for t_s, t_e in extended:
        coverage = sum(1 for t in range(t_s, t_e) if t in idx_set) / (t_e - t_s)
        out.append(AnomalySegment(t_s=t_s, t_e=t_e, kind="fused", score=coverage))
    return out


def save_detector(detector: ReconstructionDetector, path: str | Path) -> None:
    """Serialize config, weights, threshold and statistics as versioned JSON."""
    cfg = detector.config
    blob = {
        "format_version": 1,
        "window_length": detector.window_length,
        "sizes": detector.model.sizes,
        "weights": [w.tolist() for w in detector.model.weights],
        "biases": [b.tolist() for b in detector.model.biases],
        "threshold": detector.threshold,
        "error_mean": detector.error_mean,
        "error_std": detector.error_std,
        "input_mean": detector.input_mean,
        "input_std": detector.input_std,
        "initial_loss": detector.initial_loss,
        "final_loss": detector.final_loss,
        "config": {
            "seed": cfg.seed,
            "gamma": cfg.gamma,
            "lag_l": cfg.lag_l,
            "sigma_k": cfg.sigma_k,
            "window_length": cfg.window_length,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
        },
    }
    Path(path).write_text(json.dumps(blob), encoding="utf-8")


def load_detector(path: str | Path) -> ReconstructionDetector:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("format_version") != 1:
        raise ParameterError(f"unsupported detector checkpoint version {blob.get('format_version')!r}")
    cfg = DetectorConfig(**blob["config"])
    model = MlpAutoencoder(blob["window_length"], seed=cfg.seed)
    model.weights = [np.array(w, dtype=np.float64) for w in blob["weights"]]
    model.biases = [np.array(b, dtype=np.float64) for b in blob["biases"]]
    return ReconstructionDetector(
        model=model,
        threshold=blob["threshold"],
        error_mean=blob["error_mean"],
        error_std=blob["error_std"],
        input_mean=blob["input_mean"],
        input_std=blob["input_std"],
        initial_loss=blob["initial_loss"],
        final_loss=blob["final_loss"],
        config=cfg,
    )
