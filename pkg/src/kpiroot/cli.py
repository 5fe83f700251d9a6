"""Command-line interface: dataset generation, localization, evaluation, benchmarks.

Exit codes: 0 success, 1 I/O or parse failure, 2 usage error (argparse's
convention), 3 localization found no anomaly. Set KPIROOT_LOG to control log
verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .datagen import ANOMALY_KINDS, ScenarioSpec, generate_scenario, load_dataset, load_manifest, write_dataset
from .errors import IngestionError, KpirootError
from .evaluation import RcaGroundTruth, evaluate_ranking
from .pipeline import RunConfig, localize
from .scoring import SelectionPolicy

__all__ = ["main", "build_parser"]

log = logging.getLogger("kpiroot")


def _setup_logging() -> None:
    level = os.environ.get("KPIROOT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpiroot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a labeled synthetic dataset directory")
    gen.add_argument("--m", type=int, default=50, help="number of candidate series")
    gen.add_argument("--n", type=int, default=2880, help="series length in samples")
    gen.add_argument("--period", type=int, required=True, help="seasonal period in samples")
    gen.add_argument("--root-causes", type=int, default=None, help="root-cause count (default: sampled in [3, 8])")
    gen.add_argument("--lag-delta", type=int, default=5, help="samples by which causes precede the alarm anomaly")
    gen.add_argument("--noise-sigma", type=float, default=0.3, help="candidate noise level")
    gen.add_argument("--kind", choices=ANOMALY_KINDS, default=None, help="force one anomaly kind")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True, help="output dataset directory")

    loc = sub.add_parser("localize", help="rank candidate series behind the alarm anomaly")
    loc.add_argument("dataset", help="dataset directory with manifest.json and per-series CSVs")
    loc.add_argument("--period", type=int, default=None, help="seasonal period (default: from the manifest)")
    loc.add_argument("--w", type=int, default=None, help="PAA size (default: round(sqrt(n)))")
    loc.add_argument("--alpha", type=int, default=9, help="alphabet size")
    loc.add_argument("--lambda", dest="lam", type=float, default=0.9, help="similarity weight in the combined score")
    loc.add_argument("--gamma", type=float, default=2.0, help="window-ratio threshold")
    loc.add_argument("--trend-lags", type=int, default=5, help="window length l of the ratio detector")
    loc.add_argument("--lag", type=int, default=3, help="autoregression order q")
    loc.add_argument("--seasonal-window", type=int, default=7, help="loess span over cycle-subseries (cycles)")
    loc.add_argument("--trend-window", type=int, default=None, help="loess span of the trend smoother (samples)")
    loc.add_argument("--detector-window", type=int, default=32, help="autoencoder window length")
    loc.add_argument("--epochs", type=int, default=300, help="autoencoder training epochs")
    loc.add_argument("--policy", choices=["top_k", "relative_threshold"], default="relative_threshold")
    loc.add_argument("--top-k", type=int, default=5, help="k for the top_k policy")
    loc.add_argument("--theta", type=float, default=0.8, help="threshold fraction for relative_threshold")
    loc.add_argument("--detection", choices=["decomposition", "trend_only"], default="decomposition")
    loc.add_argument("--symbols", choices=["isax", "sax"], default="isax")
    loc.add_argument("--causality-scaling", choices=["minmax", "raw"], default="minmax")
    loc.add_argument("--jobs", type=int, default=1, help="parallel scoring workers")
    loc.add_argument("--seed", type=int, default=0)
    loc.add_argument("--out", default=None, help="report JSON path (default: stdout)")

    ev = sub.add_parser("eval", help="score localization reports against manifests")
    ev.add_argument("reports", nargs="+", help="report JSON files")
    ev.add_argument("--manifests", nargs="+", required=True, help="manifest JSON files")
    ev.add_argument("--k", type=int, nargs="+", default=[5, 10], help="cutoffs for Hit@k / NDCG@k")
    ev.add_argument("--out", default=None, help="metrics JSON path (default: stdout)")

    bench = sub.add_parser("bench", help="measure localization wall-clock vs n and m")
    bench.add_argument("--sizes", type=int, nargs="+", required=True, help="series lengths n to benchmark")
    bench.add_argument("--m", type=int, nargs="+", default=[1000], help="candidate counts to benchmark")
    bench.add_argument("--reps", type=int, default=1)
    bench.add_argument("--period", type=int, default=96)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", required=True, help="timing CSV path")
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    weights = {args.kind: 1.0} if args.kind else {kind: 1.0 for kind in ANOMALY_KINDS}
    spec = ScenarioSpec(
        seed=args.seed,
        m=args.m,
        n=args.n,
        period=args.period,
        num_root_causes=args.root_causes,
        lag_delta=args.lag_delta,
        noise_sigma=args.noise_sigma,
        anomaly_kind_weights=weights,
    )
    dataset = generate_scenario(spec)
    manifest_path = write_dataset(dataset, args.out)
    log.info("wrote dataset %s (%d series)", args.out, len(dataset.candidates) + 1)
    print(str(manifest_path))
    return 0


def _run_config_from_args(args: argparse.Namespace, period: int) -> RunConfig:
    return RunConfig(
        period=period,
        w=args.w,
        alpha=args.alpha,
        lam=args.lam,
        gamma=args.gamma,
        trend_lags=args.trend_lags,
        q=args.lag,
        seasonal_window=args.seasonal_window,
        trend_window=args.trend_window,
        detector_window=args.detector_window,
        epochs=args.epochs,
        detection_mode=args.detection,
        symbol_mode=args.symbols,
        causality_scaling=args.causality_scaling,
        policy=SelectionPolicy(mode=args.policy, k=args.top_k, theta=args.theta),
        seed=args.seed,
        jobs=args.jobs,
    )


def _cmd_localize(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    period = args.period if args.period is not None else dataset.spec.period
    cfg = _run_config_from_args(args, period)
    report = localize(dataset.alarm, dataset.candidates, cfg, incident_id=dataset.truth.incident_id)
    payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    if not report["anomaly_detected"]:
        log.warning("no anomaly detected on the alarm series")
        return 3
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    manifests = {}
    for path in args.manifests:
        manifest = load_manifest(path)
        manifests[manifest["incident_id"]] = manifest
    per_incident = []
    ks = tuple(args.k)
    for path in args.reports:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
        incident_id = report["incident_id"]
        if incident_id not in manifests:
            raise IngestionError(f"{path}: no manifest for incident {incident_id!r}")
        manifest = manifests[incident_id]
        truth = RcaGroundTruth(incident_id, frozenset(manifest["truth"]))
        ranked = [row["kpi_id"] for row in report["candidates"]]
        predicted = set(report["predicted_root_causes"])
        metrics = evaluate_ranking(ranked, predicted, truth, ks=ks)
        per_incident.append({"incident_id": incident_id, **metrics.to_dict()})
    aggregate = {
        "precision": float(np.mean([row["precision"] for row in per_incident])),
        "recall": float(np.mean([row["recall"] for row in per_incident])),
        "f1": float(np.mean([row["f1"] for row in per_incident])),
        "hit_at_k": {
            str(k): float(np.mean([row["hit_at_k"][str(k)] for row in per_incident])) for k in ks
        },
        "ndcg_at_k": {
            str(k): float(np.mean([row["ndcg_at_k"][str(k)] for row in per_incident])) for k in ks
        },
    }
    payload = json.dumps(
        {"schema_version": 1, "incidents": per_incident, "aggregate": aggregate}, indent=2, sort_keys=True
    ) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    rows = []
    for n in args.sizes:
        for m in args.m:
            spec = ScenarioSpec(
                seed=args.seed,
                m=m,
                n=n,
                period=args.period,
                num_root_causes=max(3, min(8, m - 1)) if m > 3 else 1,
                anomaly_kind_weights={"trend_shift": 1.0},
            )
            dataset = generate_scenario(spec)
            cfg = RunConfig(period=args.period, seed=args.seed, jobs=args.jobs)
            for _ in range(args.reps):
                start = time.perf_counter()
                report = localize(dataset.alarm, dataset.candidates, cfg, incident_id=dataset.truth.incident_id)
                total = time.perf_counter() - start
                for stage, seconds in report["timings"].items():
                    rows.append((n, m, stage, seconds))
                rows.append((n, m, "total", total))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "m", "stage", "seconds"])
        writer.writerows(rows)
    log.info("wrote %d timing rows to %s", len(rows), args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": _cmd_gen, "localize": _cmd_localize, "eval": _cmd_eval, "bench": _cmd_bench}
    try:
        return handlers[args.command](args)
    except IngestionError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KpirootError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
