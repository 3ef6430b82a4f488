"""Evaluation methodology: per-run prediction frequency, CCDF curves and
the minimum-leaf-size sweep, stratified by raw-material type.

Splits assign whole runs to train or test, never individual snapshots, so
no test snapshot ever leaks into training. Unknown verdicts (snapshots
outside every supported composite) are excluded from the accuracy
denominator and reported separately: they signal out-of-regime operation,
not a wrong prediction.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from plantstate.analytics import CompositeMatcher, DEFAULT_DECISION_THRESHOLD
from plantstate.core import ModelBundle, VERDICT_TARGET, VERDICT_UNKNOWN
from plantstate.estimator import train_model
from plantstate.ingest import Dataset, build_training_set

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunEvaluation:
    """Prediction quality over one production run's snapshots."""

    batch_id: str
    snapshot_count: int
    correct_count: int
    unknown_count: int
    actual_label: str
    correct_prediction_frequency: Optional[float]

    @property
    def evaluated_count(self) -> int:
        return self.snapshot_count - self.unknown_count

    def to_dict(self) -> dict:
        return {
            "batchId": self.batch_id,
            "snapshotCount": self.snapshot_count,
            "correctCount": self.correct_count,
            "unknownCount": self.unknown_count,
            "actualLabel": self.actual_label,
            "correctPredictionFrequency": self.correct_prediction_frequency,
        }


def evaluate_run(model, run_snapshots: Sequence, actual_label: str,
                 decision_threshold: float = DEFAULT_DECISION_THRESHOLD,
                 target_label: Optional[str] = None,
                 batch_id: str = "") -> RunEvaluation:
    """Score every snapshot of one run against its actual outcome.

    A prediction is correct iff (verdict == target) <=> (actual label is the
    target label). ``model`` may be a bundle or a prebuilt matcher (then
    ``target_label`` is required).
    """
    if isinstance(model, ModelBundle):
        matcher = CompositeMatcher.from_bundle(model)
        target_label = model.quality_config.target_label
    else:
        matcher = model
        if target_label is None:
            raise ValueError("target_label required with a bare matcher")

    actually_target = actual_label == target_label
    correct = 0
    unknown = 0
    for snap in run_snapshots:
        p = matcher.predict_quality(snap, decision_threshold)
        if p.verdict == VERDICT_UNKNOWN:
            unknown += 1
        elif (p.verdict == VERDICT_TARGET) == actually_target:
            correct += 1
    evaluated = len(run_snapshots) - unknown
    freq = correct / evaluated if evaluated > 0 else None
    return RunEvaluation(
        batch_id=batch_id, snapshot_count=len(run_snapshots),
        correct_count=correct, unknown_count=unknown,
        actual_label=actual_label, correct_prediction_frequency=freq,
    )


def frequency_ccdf(run_evaluations: Sequence[RunEvaluation],
                   grid_step: float = 0.05) -> list[tuple[float, float]]:
    """For x on a [0, 1] grid: fraction of runs with frequency strictly > x."""
    freqs = [e.correct_prediction_frequency for e in run_evaluations
             if e.correct_prediction_frequency is not None]
    if not freqs:
        raise ValueError("no evaluable runs")
    steps = int(round(1.0 / grid_step))
    points = []
    for i in range(steps + 1):
        x = i / steps
        points.append((x, sum(1 for f in freqs if f > x) / len(freqs)))
    return points


# ---------------------------------------------------------------------------
# Run-level splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Assigns whole runs to train or test.

    ``temporal`` trains on the earliest runs (by start time); ``random``
    shuffles runs with the given seed.
    """

    kind: str = "temporal"
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("temporal", "random"):
            raise ValueError(f"unknown split kind: {self.kind!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train fraction must be in (0, 1)")


def split_runs(runs: Sequence, spec: SplitSpec) -> tuple[list, list]:
    ordered = sorted(runs, key=lambda r: (r.start, r.batch_id))
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        ordered = [ordered[i] for i in rng.permutation(len(ordered))]
    k = int(len(ordered) * spec.train_fraction)
    k = max(1, min(k, len(ordered) - 1)) if len(ordered) >= 2 else len(ordered)
    return ordered[:k], ordered[k:]


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    """One (material type, min leaf size) evaluation."""

    material_type: Optional[str]
    min_leaf_size: int
    accuracy: Optional[float]
    accuracy_run_weighted: Optional[float]
    run_evaluations: tuple[RunEvaluation, ...]
    state_counts: Mapping[str, int]
    ccdf_points: tuple[tuple[float, float], ...]
    train_run_count: int
    test_run_count: int

    def to_dict(self) -> dict:
        return {
            "materialType": self.material_type,
            "minLeafSize": self.min_leaf_size,
            "accuracy": self.accuracy,
            "accuracyRunWeighted": self.accuracy_run_weighted,
            "runEvaluations": [e.to_dict() for e in self.run_evaluations],
            "stateCounts": dict(self.state_counts),
            "ccdfPoints": [list(p) for p in self.ccdf_points],
            "trainRunCount": self.train_run_count,
            "testRunCount": self.test_run_count,
        }


@dataclass(frozen=True)
class SweepReport:
    cells: tuple[SweepCell, ...]
    leaf_sizes: tuple[int, ...]
    split: SplitSpec
    decision_threshold: float

    def to_dict(self) -> dict:
        return {
            "leafSizes": list(self.leaf_sizes),
            "split": {"kind": self.split.kind,
                      "trainFraction": self.split.train_fraction,
                      "seed": self.split.seed},
            "decisionThreshold": self.decision_threshold,
            "cells": [c.to_dict() for c in self.cells],
        }


def pooled_and_weighted(evaluations: Sequence[RunEvaluation]
                         ) -> tuple[Optional[float], Optional[float]]:
    """Accuracy two ways; exact rational arithmetic keeps them identical."""
    total_correct = sum(e.correct_count for e in evaluations)
    total_evaluated = sum(e.evaluated_count for e in evaluations)
    if total_evaluated == 0:
        return None, None
    pooled = total_correct / total_evaluated
    weighted = sum(
        (Fraction(e.correct_count, e.evaluated_count) * e.evaluated_count
         for e in evaluations if e.evaluated_count > 0),
        Fraction(0),
    ) / total_evaluated
    return pooled, float(weighted)


def evaluate_bundle_on_runs(bundle: ModelBundle, dataset: Dataset,
                            test_runs: Sequence,
                            decision_threshold: float) -> list[RunEvaluation]:
    matcher = CompositeMatcher.from_bundle(bundle)
    target = bundle.quality_config.target_label
    out = []
    for run in test_runs:
        samples = dataset.samples_for_run(run.batch_id)
        snapshots = [s.snapshot for s in samples]
        out.append(evaluate_run(matcher, snapshots,
                                dataset.run_labels[run.batch_id],
                                decision_threshold, target_label=target,
                                batch_id=run.batch_id))
    return out


def sweep_min_leaf_size(dataset: Dataset, leaf_sizes: Sequence[int],
                        material_types: Optional[Sequence[Optional[str]]] = None,
                        split: SplitSpec = SplitSpec(),
                        decision_threshold: float = DEFAULT_DECISION_THRESHOLD
                        ) -> SweepReport:
    """Train and evaluate the full pipeline per (material type, leaf size).

    Each material type gets its own bundles, trained only on that type's
    training runs and evaluated on its held-out runs.
    """
    if not leaf_sizes:
        raise ValueError("no leaf sizes to sweep")
    labeled_runs = [r for r in dataset.runs if r.batch_id in dataset.run_labels]
    by_type = {}
    for run in labeled_runs:
        by_type.setdefault(run.material_type, []).append(run)
    if material_types is None:
        material_types = sorted(by_type, key=lambda m: (m is None, m))

    cells = []
    for material in material_types:
        runs = by_type.get(material, [])
        train_runs, test_runs = split_runs(runs, split)
        if not test_runs:
            raise ValueError(f"material type has no test runs: {material!r}")
        assert not {r.batch_id for r in train_runs} & \
            {r.batch_id for r in test_runs}
        for leaf_size in leaf_sizes:
            training_set = build_training_set(
                dataset.snapshots, train_runs, dataset.run_labels,
                dataset.window, dataset.manifest, dataset.quality_config)
            bundle = train_model(training_set, leaf_size,
                                 decision_threshold, dataset.fingerprint)
            evaluations = evaluate_bundle_on_runs(bundle, dataset, test_runs,
                                                  decision_threshold)
            pooled, weighted = pooled_and_weighted(evaluations)
            supported = sum(1 for c in bundle.composites if c.supported)
            cells.append(SweepCell(
                material_type=material, min_leaf_size=leaf_size,
                accuracy=pooled, accuracy_run_weighted=weighted,
                run_evaluations=tuple(evaluations),
                state_counts={
                    "status": len(bundle.status_states),
                    "settings": len(bundle.settings_states),
                    "composites": len(bundle.composites),
                    "supportedComposites": supported,
                },
                ccdf_points=tuple(frequency_ccdf(evaluations)),
                train_run_count=len(train_runs),
                test_run_count=len(test_runs),
            ))
    return SweepReport(cells=tuple(cells), leaf_sizes=tuple(leaf_sizes),
                       split=split, decision_threshold=decision_threshold)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _slug(material: Optional[str]) -> str:
    if material is None:
        return "default"
    return "".join(ch if ch.isalnum() else "_" for ch in material).strip("_")


def write_report_files(report: SweepReport, out_dir) -> list[Path]:
    """Emit report.json plus plotting CSVs (accuracy table, CCDF per type)."""
    from plantstate.core import canonical_json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out / "report.json"
    report_path.write_text(canonical_json(report.to_dict()) + "\n",
                           encoding="utf-8")
    written.append(report_path)

    acc_path = out / "fig5_accuracy.csv"
    with open(acc_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["material_type", "min_leaf_size", "accuracy",
                         "accuracy_run_weighted"])
        for cell in report.cells:
            writer.writerow([
                cell.material_type or "", cell.min_leaf_size,
                "" if cell.accuracy is None else repr(cell.accuracy),
                "" if cell.accuracy_run_weighted is None
                else repr(cell.accuracy_run_weighted),
            ])
    written.append(acc_path)

    materials = []
    for cell in report.cells:
        if cell.material_type not in materials:
            materials.append(cell.material_type)
    for material in materials:
        cells = [c for c in report.cells if c.material_type == material]
        path = out / f"ccdf_{_slug(material)}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x"] + [f"mls_{c.min_leaf_size}" for c in cells])
            xs = [p[0] for p in cells[0].ccdf_points]
            for i, x in enumerate(xs):
                writer.writerow([x] + [repr(c.ccdf_points[i][1]) for c in cells])
        written.append(path)
    return written


def summary_table(report: SweepReport) -> str:
    """Plain-text accuracy-by-leaf-size table for the CLI."""
    lines = []
    header = f"{'material':<16} {'minLeaf':>8} {'accuracy':>9} " \
             f"{'runs>0.5':>9} {'states(u/w)':>12} {'unknown':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for cell in report.cells:
        freqs = [e.correct_prediction_frequency for e in cell.run_evaluations
                 if e.correct_prediction_frequency is not None]
        above = sum(1 for f in freqs if f > 0.5) / len(freqs) if freqs else 0.0
        unknown = sum(e.unknown_count for e in cell.run_evaluations)
        acc = "n/a" if cell.accuracy is None else f"{cell.accuracy:.3f}"
        lines.append(
            f"{(cell.material_type or '-'):<16} {cell.min_leaf_size:>8} "
            f"{acc:>9} {above:>9.2f} "
            f"{cell.state_counts['status']:>5}/{cell.state_counts['settings']:<6} "
            f"{unknown:>8}"
        )
    return "\n".join(lines)
