"""Seeded synthetic incident generator with labeled root causes.

Each candidate is a random-phase, random-amplitude seasonal pattern plus
Gaussian noise; the alarm is a weight-normalized aggregate of all candidates
plus its own noise. Root-cause candidates receive one injected anomaly —
a ramped level shift, a suppressed-and-dipped seasonal window, or a short
spike — and the injected change enters the aggregate ``lag_delta`` samples
later, so cause precedes effect by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .evaluation import RcaGroundTruth
from .series import KpiSeries, read_kpi_csv, write_kpi_csv

__all__ = [
    "ANOMALY_KINDS",
    "ScenarioSpec",
    "LabeledDataset",
    "inject_anomaly",
    "generate_scenario",
    "write_dataset",
    "load_dataset",
    "load_manifest",
]

ANOMALY_KINDS = ("trend_shift", "seasonal_deviation", "residual_spike")

# Injection shape parameters (in candidate noise-sigma / amplitude units).
# Chosen so that an incident with as few as 3 root causes remains visible in
# the aggregate after the ~1/m attenuation of the weighted mean.
_SHIFT_SIGMA_RANGE = (16.0, 26.0)
_SPIKE_SIGMA_RANGE = (14.0, 22.0)
_SPIKE_DURATION_SAMPLES = (15, 45)
_SEASONAL_DAMP = 0.9
_SEASONAL_DIP = 2.5
_SEASONAL_DURATION_CYCLES = 2.5
_ALARM_NOISE_FACTOR = 0.05
_AMPLITUDE_RANGE = (0.5, 1.5)
_WEIGHT_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthetic incident.

    ``num_root_causes=None`` samples uniformly from [3, 8]. The anomaly kind
    is drawn once per incident from ``anomaly_kind_weights``; all root causes
    share the incident's kind and onset time.
    """

    seed: int
    m: int = 50
    n: int = 2880
    period: int = 240
    num_root_causes: int | None = None
    lag_delta: int = 5
    noise_sigma: float = 0.25
    anomaly_kind_weights: dict[str, float] = field(
        default_factory=lambda: {kind: 1.0 for kind in ANOMALY_KINDS}
    )

    def __post_init__(self) -> None:
        if self.m < 2 or self.n < 4 or self.period < 2:
            raise ParameterError("need m >= 2, n >= 4, period >= 2")
        if self.num_root_causes is not None and not 1 <= self.num_root_causes < self.m:
            raise ParameterError(f"need 1 <= num_root_causes < m, got {self.num_root_causes}")
        if not 0 <= self.lag_delta < self.n / 10:
            raise ParameterError(f"need 0 <= lag_delta < n/10, got {self.lag_delta}")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")
        unknown = set(self.anomaly_kind_weights) - set(ANOMALY_KINDS)
        if unknown or not self.anomaly_kind_weights:
            raise ParameterError(f"bad anomaly kinds {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "m": self.m,
            "n": self.n,
            "period": self.period,
            "num_root_causes": self.num_root_causes,
            "lag_delta": self.lag_delta,
            "noise_sigma": self.noise_sigma,
            "anomaly_kind_weights": dict(sorted(self.anomaly_kind_weights.items())),
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "ScenarioSpec":
        return cls(**blob)


@dataclass
class LabeledDataset:
    """One incident: alarm, candidates, truth and injected label windows."""

    alarm: KpiSeries
    candidates: list[KpiSeries]
    truth: RcaGroundTruth
    windows: dict[str, list[tuple[int, int]]]
    spec: ScenarioSpec
    anomaly_kind: str

    @property
    def candidate_ids(self) -> list[str]:
        return [c.id for c in self.candidates]


def inject_anomaly(
    values: np.ndarray,
    kind: str,
    t0: int,
    magnitude: float,
    duration: int,
    template: np.ndarray | None = None,
) -> tuple[np.ndarray, tuple[int, int]]:
    """Apply one additive anomaly and return (modified copy, label window).

    trend_shift ramps up to ``magnitude`` over the first tenth of the window
    and holds; seasonal_deviation needs the clean seasonal ``template`` and
    replaces the cycle with a dip (damped template minus ``magnitude``);
    residual_spike adds ``magnitude`` over the (short) window.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if kind not in ANOMALY_KINDS:
        raise ParameterError(f"unknown anomaly kind {kind!r}")
    if duration < 1 or t0 < 0 or t0 + duration > n:
        raise ParameterError(f"window [{t0}, {t0 + duration}) does not fit series of length {n}")
    out = values.copy()
    window = slice(t0, t0 + duration)
    if kind == "trend_shift":
        ramp_len = max(1, min(duration, duration // 10 + 1))
        profile = np.full(duration, magnitude)
        profile[:ramp_len] = np.linspace(magnitude / ramp_len, magnitude, ramp_len)
        out[window] += profile
    elif kind == "seasonal_deviation":
        if template is None:
            raise ParameterError("seasonal_deviation requires the clean seasonal template")
        template = np.asarray(template, dtype=np.float64)
        if template.size != n:
            raise ParameterError("template length must match series length")
        out[window] += -_SEASONAL_DAMP * template[window] - magnitude
    else:  # residual_spike
        out[window] += magnitude
    return out, (t0, t0 + duration)


def _shift_later(delta: np.ndarray, lag: int) -> np.ndarray:
    if lag == 0:
        return delta.copy()
    out = np.zeros_like(delta)
    out[lag:] = delta[:-lag]
    return out


def generate_scenario(spec: ScenarioSpec) -> LabeledDataset:
    """Build one deterministic labeled incident from the spec's seed."""
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n
    k = spec.num_root_causes if spec.num_root_causes is not None else int(rng.integers(3, 9))
    if not 1 <= k < m:
        raise ParameterError(f"need 1 <= num_root_causes < m, got {k}")

    t = np.arange(n)
    omega = 2.0 * np.pi / spec.period
    amplitudes = rng.uniform(*_AMPLITUDE_RANGE, size=m)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=m)
    templates = amplitudes[:, None] * np.sin(omega * t[None, :] + phases[:, None])
    noise = rng.normal(0.0, spec.noise_sigma, size=(m, n)) if spec.noise_sigma > 0 else np.zeros((m, n))
    clean = templates + noise

    root_rows = np.sort(rng.choice(m, size=k, replace=False))
    kinds = sorted(spec.anomaly_kind_weights)
    probs = np.array([spec.anomaly_kind_weights[kind] for kind in kinds], dtype=np.float64)
    kind = str(rng.choice(kinds, p=probs / probs.sum()))

    t0 = int(rng.integers(int(0.3 * n), int(0.6 * n)))
    sigma = spec.noise_sigma if spec.noise_sigma > 0 else 1.0
    if kind == "trend_shift":
        duration = n - t0
        sign = float(rng.choice([-1.0, 1.0]))
        magnitudes = sign * sigma * rng.uniform(*_SHIFT_SIGMA_RANGE, size=k)
    elif kind == "seasonal_deviation":
        duration = min(int(_SEASONAL_DURATION_CYCLES * spec.period), n - t0)
        magnitudes = _SEASONAL_DIP * amplitudes[root_rows]
    else:
        duration = int(rng.integers(_SPIKE_DURATION_SAMPLES[0], _SPIKE_DURATION_SAMPLES[1] + 1))
        duration = min(duration, n - t0)
        sign = float(rng.choice([-1.0, 1.0]))
        magnitudes = sign * sigma * rng.uniform(*_SPIKE_SIGMA_RANGE, size=k)

    windows: dict[str, list[tuple[int, int]]] = {}
    ids = [f"vm-{i:04d}" for i in range(m)]
    injected = clean.copy()
    deltas = np.zeros((k, n))
    for j, row in enumerate(root_rows):
        new_values, window = inject_anomaly(
            clean[row], kind, t0, float(magnitudes[j]), duration, template=templates[row]
        )
        deltas[j] = new_values - clean[row]
        injected[row] = new_values
        windows[ids[row]] = [window]

    weights = np.exp(rng.uniform(np.log(_WEIGHT_RANGE[0]), np.log(_WEIGHT_RANGE[1]), size=m))
    total = weights.sum()
    alarm_values = (weights[None, :] @ clean).ravel() / total
    for j, row in enumerate(root_rows):
        alarm_values += weights[row] * _shift_later(deltas[j], spec.lag_delta) / total
    if spec.noise_sigma > 0:
        alarm_values += rng.normal(0.0, _ALARM_NOISE_FACTOR * spec.noise_sigma, size=n)
    alarm_window = (t0 + spec.lag_delta, min(t0 + spec.lag_delta + duration, n))
    windows["alarm"] = [alarm_window]

    start_time = 1_600_000_000
    interval = 60
    candidates = [
        KpiSeries(id=ids[i], start_time=start_time, interval=interval, values=injected[i]) for i in range(m)
    ]
    alarm = KpiSeries(id="alarm", start_time=start_time, interval=interval, values=alarm_values)
    truth = RcaGroundTruth(
        incident_id=f"scenario-{spec.seed:08d}",
        root_cause_ids=frozenset(ids[row] for row in root_rows),
    )
    return LabeledDataset(
        alarm=alarm,
        candidates=candidates,
        truth=truth,
        windows=windows,
        spec=spec,
        anomaly_kind=kind,
    )


def write_dataset(dataset: LabeledDataset, out_dir: str | Path) -> Path:
    """Write one CSV per series plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_kpi_csv(dataset.alarm, out / "alarm.csv")
    for candidate in dataset.candidates:
        write_kpi_csv(candidate, out / f"{candidate.id}.csv")
    manifest = {
        "schema_version": 1,
        "incident_id": dataset.truth.incident_id,
        "alarm_id": dataset.alarm.id,
        "candidate_ids": dataset.candidate_ids,
        "anomaly_kind": dataset.anomaly_kind,
        "spec": dataset.spec.to_dict(),
        "truth": sorted(dataset.truth.root_cause_ids),
        "windows": {key: [list(win) for win in value] for key, value in sorted(dataset.windows.items())},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> dict:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    if manifest.get("schema_version") != 1:
        raise ParameterError(f"unsupported manifest version {manifest.get('schema_version')!r}")
    return manifest


def load_dataset(directory: str | Path) -> LabeledDataset:
    """Read back a dataset directory written by write_dataset."""
    directory = Path(directory)
    manifest = load_manifest(directory / "manifest.json")
    alarm = read_kpi_csv(directory / f"{manifest['alarm_id']}.csv", series_id=manifest["alarm_id"])
    candidates = [read_kpi_csv(directory / f"{cid}.csv", series_id=cid) for cid in manifest["candidate_ids"]]
    return LabeledDataset(
        alarm=alarm,
        candidates=candidates,
        truth=RcaGroundTruth(manifest["incident_id"], frozenset(manifest["truth"])),
        windows={key: [tuple(win) for win in value] for key, value in manifest["windows"].items()},
        spec=ScenarioSpec.from_dict(manifest["spec"]),
        anomaly_kind=manifest["anomaly_kind"],
    )
