"""Loading, alignment and correlation of raw production data.

Input files (see README for the exact schemas):

* manifest: JSON list of parameter definitions,
* observations: wide CSV, one timestamp column plus one column per
  parameter, empty cell = no observation at that instant,
* runs: CSV of production runs,
* quality: CSV of offline quality measurements.

The pipeline resamples observations onto a regular grid (nearest-previous
value within a staleness horizon), derives the new-settings series from
the next aligned instant of the same run, labels runs from their quality
samples, and correlates everything into the training set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from plantstate.core import (
    KIND_SENSOR,
    KIND_SETTING,
    MachineSnapshot,
    ParameterDef,
    ProductionRun,
    QualityConfig,
    check_manifest,
    check_runs_disjoint,
    dataset_fingerprint,
    parse_timestamp,
)

log = logging.getLogger(__name__)

DEFAULT_GRID_SECONDS = 10.0
DEFAULT_STALENESS_STEPS = 5


@dataclass(frozen=True)
class ObservationTable:
    """Irregular observation series of one parameter kind."""

    kind: str
    series: Mapping[str, tuple[np.ndarray, np.ndarray]]  # pid -> (t_ms, values)
    source_row_count: int
    dropped_row_count: int = 0

    def t_min(self) -> int:
        return int(min(ts[0] for ts, _ in self.series.values()))

    def t_max(self) -> int:
        return int(max(ts[-1] for ts, _ in self.series.values()))


@dataclass(frozen=True)
class QualitySample:
    batch_id: str
    t: int
    measurement: float


@dataclass(frozen=True)
class TrainingSample:
    """One correlated instant: process snapshot plus its run's label."""

    t: int
    snapshot: ProcessSnapshot
    run_batch_id: str
    label: str


@dataclass(frozen=True)
class TrainingSet:
    samples: tuple[TrainingSample, ...]
    manifest: tuple[ParameterDef, ...]
    quality_config: QualityConfig
    window: tuple[int, int]
    per_run_label: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "manifest", tuple(self.manifest))


@dataclass
class IngestReport:
    """Counters for every conservation check along the pipeline."""

    source_rows: dict = field(default_factory=dict)
    grid_count: int = 0
    aligned_count: int = 0
    dropped_count: int = 0
    runs_total: int = 0
    runs_excluded_no_quality: int = 0
    quality_samples_total: int = 0
    quality_samples_outside_run: int = 0
    snapshots_outside_runs: int = 0
    runs_outside_window: int = 0
    training_samples: int = 0
    label_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sourceRows": dict(self.source_rows),
            "gridCount": self.grid_count,
            "alignedCount": self.aligned_count,
            "droppedCount": self.dropped_count,
            "runsTotal": self.runs_total,
            "runsExcludedNoQuality": self.runs_excluded_no_quality,
            "qualitySamplesTotal": self.quality_samples_total,
            "qualitySamplesOutsideRun": self.quality_samples_outside_run,
            "snapshotsOutsideRuns": self.snapshots_outside_runs,
            "runsOutsideWindow": self.runs_outside_window,
            "trainingSamples": self.training_samples,
            "labelCounts": dict(self.label_counts),
        }


@dataclass(frozen=True)
class AlignmentResult:
    snapshots: tuple[MachineSnapshot, ...]
    grid_count: int
    dropped_count: int


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_manifest(path) -> list[ParameterDef]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    manifest = [ParameterDef.from_dict(d) for d in raw]
    check_manifest(manifest)
    return manifest


def load_observations(path, manifest: Sequence[ParameterDef]
                      ) -> dict[str, ObservationTable]:
    """Parse the wide observations CSV into per-kind tables."""
    frame = pd.read_csv(path, dtype={"timestamp": str})
    if "timestamp" not in frame.columns:
        raise ValueError("observations file lacks a timestamp column")
    known = {p.id: p.kind for p in manifest}
    for col in frame.columns:
        if col != "timestamp" and col not in known:
            raise ValueError(f"unknown parameter column: {col}")

    ts = np.array([parse_timestamp(s) for s in frame["timestamp"]], dtype=np.int64)
    if (np.diff(ts) <= 0).any():
        raise ValueError("non-monotone timestamps in observations")

    tables: dict[str, ObservationTable] = {}
    for kind in (KIND_SENSOR, KIND_SETTING):
        series: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for pid, pkind in known.items():
            if pkind != kind or pid not in frame.columns:
                continue
            values = pd.to_numeric(frame[pid], errors="raise").to_numpy(dtype=float)
            mask = ~np.isnan(values)
            series[pid] = (ts[mask], values[mask])
        tables[kind] = ObservationTable(kind=kind, series=series,
                                        source_row_count=len(frame))
    return tables


def load_runs(path) -> list[ProductionRun]:
    frame = pd.read_csv(path, dtype=str)
    runs = []
    for row in frame.itertuples(index=False):
        material = getattr(row, "material_type", None)
        if material is not None and pd.isna(material):
            material = None
        runs.append(ProductionRun(
            batch_id=str(row.batch_id),
            start=parse_timestamp(row.start),
            end=parse_timestamp(row.end),
            material_type=material,
        ))
    check_runs_disjoint(runs)
    return runs


def load_quality(path) -> list[QualitySample]:
    frame = pd.read_csv(path, dtype={"batch_id": str, "timestamp": str})
    return [
        QualitySample(batch_id=str(row.batch_id),
                      t=parse_timestamp(row.timestamp),
                      measurement=float(row.measurement))
        for row in frame.itertuples(index=False)
    ]


def load_dataset(manifest_path, observations_path, runs_path, quality_path):
    """Load and validate the four input files.

    Returns (manifest, tables, runs, quality_samples) with the manifest's
    observed min/max filled from the data.
    """
    manifest = load_manifest(manifest_path)
    tables = load_observations(observations_path, manifest)
    runs = load_runs(runs_path)
    quality = load_quality(quality_path)

    observed: dict[str, tuple[float, float]] = {}
    for table in tables.values():
        for pid, (_, values) in table.series.items():
            if len(values):
                observed[pid] = (float(values.min()), float(values.max()))
    manifest = [
        ParameterDef(
            id=p.id, name=p.name, kind=p.kind, units=p.units,
            observed_min=observed.get(p.id, (None, None))[0],
            observed_max=observed.get(p.id, (None, None))[1],
        )
        for p in manifest
    ]
    return manifest, tables, runs, quality


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

def align_snapshots(tables: Mapping[str, ObservationTable],
                    sampling_interval_seconds: float = DEFAULT_GRID_SECONDS,
                    staleness_steps: int = DEFAULT_STALENESS_STEPS
                    ) -> AlignmentResult:
    """Resample every parameter onto a shared regular grid.

    Each parameter takes its nearest-previous observation; instants where
    any parameter has no observation within ``staleness_steps`` grid steps
    are dropped (and counted), so loaded instants = aligned + dropped.
    """
    if sampling_interval_seconds <= 0:
        raise ValueError("sampling interval must be positive")
    step_ms = int(round(sampling_interval_seconds * 1000))
    horizon_ms = staleness_steps * step_ms

    sensor_table = tables[KIND_SENSOR]
    setting_table = tables[KIND_SETTING]
    all_tables = [t for t in (sensor_table, setting_table) if t.series]
    if not all_tables:
        raise ValueError("no observations to align")
    t0 = min(t.t_min() for t in all_tables)
    t1 = max(t.t_max() for t in all_tables)
    grid = np.arange(t0, t1 + 1, step_ms, dtype=np.int64)

    def resample(table: ObservationTable) -> tuple[dict[str, np.ndarray], np.ndarray]:
        values: dict[str, np.ndarray] = {}
        fresh = np.ones(len(grid), dtype=bool)
        for pid, (ts, vs) in table.series.items():
            idx = np.searchsorted(ts, grid, side="right") - 1
            ok = idx >= 0
            age_ok = np.zeros(len(grid), dtype=bool)
            age_ok[ok] = (grid[ok] - ts[idx[ok]]) <= horizon_ms
            fresh &= age_ok
            col = np.full(len(grid), np.nan)
            col[ok] = vs[idx[ok]]
            values[pid] = col
        return values, fresh

    sensor_values, sensors_fresh = resample(sensor_table)
    setting_values, settings_fresh = resample(setting_table)
    keep = sensors_fresh & settings_fresh

    snapshots = []
    for i in np.nonzero(keep)[0]:
        snapshots.append(MachineSnapshot(
            t=int(grid[i]),
            sensors={pid: float(col[i]) for pid, col in sensor_values.items()},
            settings={pid: float(col[i]) for pid, col in setting_values.items()},
        ))
    if not snapshots:
        raise ValueError("empty after alignment")
    return AlignmentResult(snapshots=tuple(snapshots),
                           grid_count=len(grid),
                           dropped_count=int((~keep).sum()))


def _run_key(runs: Sequence[ProductionRun]):
    starts = np.array([r.start for r in runs], dtype=np.int64)
    ends = np.array([r.end for r in runs], dtype=np.int64)
    order = np.argsort(starts)

    def key(t: int) -> Optional[str]:
        i = int(np.searchsorted(starts[order], t, side="right")) - 1
        if i >= 0 and t <= ends[order[i]]:
            return runs[order[i]].batch_id
        return None

    return key


def derive_new_settings(snapshots: Sequence[MachineSnapshot],
                        runs: Optional[Sequence[ProductionRun]] = None
                        ) -> list[MachineSnapshot]:
    """Fill new settings: the applied settings of the next aligned instant
    of the same run; at a run's final instant they equal the applied ones.

    Without runs the whole sequence is treated as a single run. Idempotent.
    """
    ts = [s.t for s in snapshots]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("snapshots must be sorted by time")
    key = _run_key(runs) if runs is not None else (lambda t: "")
    out: list[MachineSnapshot] = []
    for i, snap in enumerate(snapshots):
        nxt = snapshots[i + 1] if i + 1 < len(snapshots) else None
        if nxt is not None and key(nxt.t) == key(snap.t):
            out.append(snap.with_new_settings(nxt.settings))
        else:
            out.append(snap.with_new_settings(snap.settings))
    return out


# ---------------------------------------------------------------------------
# Labels and correlation
# ---------------------------------------------------------------------------

def label_runs(runs: Sequence[ProductionRun],
               quality_samples: Sequence[QualitySample],
               quality_config: QualityConfig) -> dict[str, str]:
    """Aggregate each run's quality samples into its label.

    Runs with no samples are excluded (with a warning), never imputed.
    """
    by_run: dict[str, list[QualitySample]] = {}
    run_by_id = {r.batch_id: r for r in runs}
    for sample in quality_samples:
        if sample.batch_id not in run_by_id:
            log.warning("quality sample for unknown run %s", sample.batch_id)
            continue
        run = run_by_id[sample.batch_id]
        if not run.contains(sample.t):
            log.warning("quality sample outside run %s window", sample.batch_id)
        by_run.setdefault(sample.batch_id, []).append(sample)

    labels: dict[str, str] = {}
    for run in runs:
        samples = by_run.get(run.batch_id)
        if not samples:
            log.warning("no quality samples for run %s; excluded", run.batch_id)
            continue
        measurements = [s.measurement for s in samples]
        mode = quality_config.aggregation
        if mode == "mean":
            labels[run.batch_id] = quality_config.band_for(
                sum(measurements) / len(measurements))
        elif mode == "lastSample":
            last = max(samples, key=lambda s: s.t)
            labels[run.batch_id] = quality_config.band_for(last.measurement)
        else:  # majorityInBand
            target_band = quality_config.bands[quality_config.target_label]
            in_band = sum(
                1 for m in measurements
                if target_band.low < m <= target_band.high
            )
            if in_band / len(measurements) >= quality_config.in_band_threshold:
                labels[run.batch_id] = quality_config.target_label
            else:
                labels[run.batch_id] = quality_config.band_for(
                    sum(measurements) / len(measurements))
    return labels


def build_training_set(snapshots: Sequence[MachineSnapshot],
                       runs: Sequence[ProductionRun],
                       run_labels: Mapping[str, str],
                       window: tuple[int, int],
                       manifest: Sequence[ParameterDef],
                       quality_config: QualityConfig,
                       report: Optional[IngestReport] = None) -> TrainingSet:
    """Correlate snapshots with runs: every snapshot inside a labeled run
    within the window becomes a training sample carrying the run's label."""
    t0, t1 = window
    in_window = [r for r in runs if r.start >= t0 and r.end <= t1]
    if report is not None:
        report.runs_outside_window = len(runs) - len(in_window)
    labeled = [r for r in in_window if r.batch_id in run_labels]
    key = _run_key(labeled) if labeled else (lambda t: None)

    samples: list[TrainingSample] = []
    discarded = 0
    for snap in snapshots:
        batch = key(snap.t)
        if batch is None:
            discarded += 1
            continue
        if snap.new_settings is None:
            raise ValueError("new settings not derived yet")
        samples.append(TrainingSample(
            t=snap.t, snapshot=snap.process(),
            run_batch_id=batch, label=run_labels[batch],
        ))
    if not samples:
        raise ValueError("empty training set")
    if report is not None:
        report.snapshots_outside_runs = discarded
        report.training_samples = len(samples)
        counts: dict[str, int] = {}
        for s in samples:
            counts[s.label] = counts.get(s.label, 0) + 1
        report.label_counts = counts
    return TrainingSet(
        samples=tuple(samples), manifest=tuple(manifest),
        quality_config=quality_config, window=window,
        per_run_label={r.batch_id: run_labels[r.batch_id] for r in labeled},
    )


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Everything the trainer and evaluator need, after ingest."""

    manifest: tuple[ParameterDef, ...]
    quality_config: QualityConfig
    snapshots: tuple[MachineSnapshot, ...]
    runs: tuple[ProductionRun, ...]
    run_labels: Mapping[str, str]
    training_set: TrainingSet
    window: tuple[int, int]
    report: IngestReport
    fingerprint: str

    def runs_by_material(self) -> dict[Optional[str], list[ProductionRun]]:
        out: dict[Optional[str], list[ProductionRun]] = {}
        for run in self.runs:
            out.setdefault(run.material_type, []).append(run)
        return out

    def samples_for_run(self, batch_id: str) -> list[TrainingSample]:
        return [s for s in self.training_set.samples
                if s.run_batch_id == batch_id]


def ingest_dataset(manifest_path, observations_path, runs_path, quality_path,
                   quality_config: QualityConfig,
                   grid_seconds: float = DEFAULT_GRID_SECONDS,
                   staleness_steps: int = DEFAULT_STALENESS_STEPS,
                   window: Optional[tuple[int, int]] = None) -> Dataset:
    """Run the full ingest pipeline over the four input files."""
    report = IngestReport()
    manifest, tables, runs, quality = load_dataset(
        manifest_path, observations_path, runs_path, quality_path)
    report.source_rows = {kind: t.source_row_count for kind, t in tables.items()}
    report.runs_total = len(runs)
    report.quality_samples_total = len(quality)

    aligned = align_snapshots(tables, grid_seconds, staleness_steps)
    report.grid_count = aligned.grid_count
    report.aligned_count = len(aligned.snapshots)
    report.dropped_count = aligned.dropped_count
    assert report.grid_count == report.aligned_count + report.dropped_count

    snapshots = derive_new_settings(aligned.snapshots, runs)
    run_labels = label_runs(runs, quality, quality_config)
    report.runs_excluded_no_quality = len(runs) - len(run_labels)
    run_by_id = {r.batch_id: r for r in runs}
    report.quality_samples_outside_run = sum(
        1 for s in quality
        if s.batch_id in run_by_id and not run_by_id[s.batch_id].contains(s.t)
    )

    if window is None:
        window = (min(r.start for r in runs), max(r.end for r in runs))
    training_set = build_training_set(snapshots, runs, run_labels, window,
                                      manifest, quality_config, report)

    def file_bytes(path) -> bytes:
        with open(path, "rb") as fh:
            return fh.read()

    fingerprint = dataset_fingerprint([
        file_bytes(manifest_path), file_bytes(observations_path),
        file_bytes(runs_path), file_bytes(quality_path),
        f"grid={grid_seconds};staleness={staleness_steps}".encode(),
    ])
    return Dataset(
        manifest=tuple(manifest), quality_config=quality_config,
        snapshots=tuple(snapshots), runs=tuple(runs), run_labels=run_labels,
        training_set=training_set, window=window, report=report,
        fingerprint=fingerprint,
    )
