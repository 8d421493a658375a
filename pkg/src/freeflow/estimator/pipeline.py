"""Per-trip θ estimates and their population summary."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .matching import (
    DEFAULT_SMALL_GAP_M,
    DEFAULT_SNAP_RADIUS_M,
    GapReport,
    Trace,
    data_free_flow_time,
    match_trace,
)
from .roadgraph import RoadGraph, best_free_flow_time

log = logging.getLogger(__name__)

THRESHOLDS = (0.25, 0.5, 0.88, 1.0)
DECILES = tuple(np.round(np.linspace(0.0, 1.0, 11), 2))
OUTPUT_COLUMNS = ("trip_id", "best_ff_s", "data_ff_s", "deviation", "theta_hat", "n_small_gaps", "n_large_gaps")


@dataclass(frozen=True)
class EstimatorConfig:
    snap_radius: float = DEFAULT_SNAP_RADIUS_M
    small_gap_threshold: float = DEFAULT_SMALL_GAP_M

    def __post_init__(self) -> None:
        if not self.snap_radius > 0:
            raise ValueError("snap_radius must be > 0")
        if not self.small_gap_threshold >= 0:
            raise ValueError("small_gap_threshold must be >= 0")


@dataclass(frozen=True)
class TripEstimate:
    trip_id: str
    best_ff: float
    data_ff: float
    gap_report: GapReport

    @property
    def deviation(self) -> float:
        return self.data_ff / self.best_ff

    @property
    def theta_hat(self) -> float:
        return self.deviation - 1.0

    def row(self) -> dict:
        return {
            "trip_id": self.trip_id,
            "best_ff_s": self.best_ff,
            "data_ff_s": self.data_ff,
            "deviation": self.deviation,
            "theta_hat": self.theta_hat,
            "n_small_gaps": self.gap_report.n_small,
            "n_large_gaps": self.gap_report.n_large,
        }


def estimate_trip(graph: RoadGraph, trace: Trace, config: EstimatorConfig | None = None) -> TripEstimate:
    cfg = config or EstimatorConfig()
    matched = match_trace(graph, trace, cfg.snap_radius)
    best = best_free_flow_time(graph, matched.origin, matched.destination)
    if not best > 0.0:
        raise ValueError(f"trip {trace.trip_id!r}: origin and destination coincide")
    data, report = data_free_flow_time(graph, matched, cfg.small_gap_threshold)
    return TripEstimate(trace.trip_id, best, data, report)


def estimate_all(
    graph: RoadGraph, traces: Iterable[Trace], config: EstimatorConfig | None = None
) -> tuple[list[TripEstimate], list[tuple[str, str]]]:
    """Estimate every trip; failures are collected as ``(trip_id, reason)`` rather than raised."""
    out, failed = [], []
    for tr in traces:
        try:
            out.append(estimate_trip(graph, tr, config))
        except (ValueError, KeyError) as exc:
            log.warning("skipping trip %s: %s", tr.trip_id, exc)
            failed.append((tr.trip_id, str(exc)))
    return out, failed


@dataclass(frozen=True)
class DeviationSummary:
    n: int
    quantiles: dict  # probability -> theta_hat
    fraction_below: dict  # threshold -> share of trips with theta_hat < threshold

    def to_json(self) -> dict:
        return {
            "n_trips": self.n,
            "deciles": {f"{p:.1f}": v for p, v in self.quantiles.items()},
            "fraction_below": {f"{t:g}": v for t, v in self.fraction_below.items()},
        }

    def rows(self) -> list[tuple[str, str, float]]:
        """Flat ``(kind, key, value)`` records for CSV export."""
        return [("quantile", f"{p:.1f}", v) for p, v in self.quantiles.items()] + [
            ("fraction_below", f"{t:g}", v) for t, v in self.fraction_below.items()
        ]


def deviation_distribution(
    estimates: Sequence[TripEstimate | float], thresholds: Sequence[float] = THRESHOLDS
) -> DeviationSummary:
    """Deciles of θ̂ (linear interpolation) and the share of trips strictly below each threshold."""
    vals = np.array([e.theta_hat if isinstance(e, TripEstimate) else float(e) for e in estimates])
    if vals.size == 0:
        raise ValueError("no estimates")
    qs = np.quantile(vals, DECILES)
    return DeviationSummary(
        int(vals.size),
        {float(p): float(q) for p, q in zip(DECILES, qs)},
        {float(t): float(np.mean(vals < t)) for t in sorted(thresholds)},
    )


# -- CSV I/O ----------------------------------------------------------------------


def load_traces_csv(path: str | Path) -> list[Trace]:
    """Read ``trip_id,timestamp,lat,lon`` rows; rows are sorted by time within each trip."""
    groups: dict[str, list[tuple[float, float, float]]] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"trip_id", "timestamp", "lat", "lon"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                groups[row["trip_id"]].append((float(row["timestamp"]), float(row["lat"]), float(row["lon"])))
            except ValueError as exc:
                raise ValueError(f"{path}: bad trace row {row}: {exc}") from None
    traces = []
    for tid, pts in groups.items():
        pts.sort()
        arr = np.array(pts)
        traces.append(Trace(arr[:, 0], arr[:, 1], arr[:, 2], trip_id=tid))
    return traces


def write_traces_csv(traces: Iterable[Trace], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trip_id", "timestamp", "lat", "lon"])
        for tr in traces:
            for t, la, lo in zip(tr.times, tr.lats, tr.lons):
                w.writerow([tr.trip_id, repr(float(t)), repr(float(la)), repr(float(lo))])


def write_estimates_csv(estimates: Iterable[TripEstimate], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=OUTPUT_COLUMNS)
    w.writeheader()
    for e in estimates:
        w.writerow(e.row())


def summary_json(summary: DeviationSummary, failed: Sequence[tuple[str, str]] = ()) -> str:
    data = summary.to_json()
    data["skipped"] = [{"trip_id": t, "reason": r} for t, r in failed]
    return json.dumps(data, indent=2)
