"""Synthetic dataset generation for demos and the end-to-end experiment.

The "box" scenario encodes a crisp ground truth: a production run reaches
target quality iff its operating pressure setting h1 lies in a known band
and its level sensor s1 sits at or below a limit. Runs come in three
flavors:

* steady in-band runs, generated in (target, non-target) pairs that share
  the same h1 value and run length, one per side of the s1 limit; the
  pairing keeps every in-band split exactly gain-free, so the settings
  tree learns the band as one piece instead of fragmenting it,
* corrected runs, also in matched pairs: h1 starts outside the band and is
  adjusted into it at the first instant (a setup correction). Their first
  snapshot carries (off-band status, in-band new settings) and is the
  transition evidence recommendations rely on,
* steady off-band runs, only in the high-s1 regime where no setting can
  reach target; runs that could have been saved are always corrected.

h1 values are drawn from shared discrete grids so that held-out runs
revisit populated regions, and dead zones around the decision boundaries
keep every run classifiable at the training data's own resolution.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from plantstate.core import Interval, QualityConfig, format_timestamp
from plantstate.runtime.plant import PlantSpec

EPOCH_2026 = 1_767_225_600_000  # 2026-01-01T00:00:00Z


@dataclass(frozen=True)
class BoxScenario:
    """Parameters of the box ground truth and dataset shape."""

    n_runs: int = 200
    ticks_per_run: int = 60
    grid_seconds: float = 10.0
    gap_ticks: int = 2
    band_low: float = 100.0
    band_high: float = 110.0
    sensor_limit: float = 50.0
    h_min: float = 90.0
    h_max: float = 120.0
    s_min: float = 20.0
    s_max: float = 80.0
    dead_zone_h: float = 0.3
    dead_zone_s: float = 0.6
    noise_sigma: float = 0.2
    in_band_step: float = 0.25
    off_band_step: float = 0.7
    in_band_pair_fraction: float = 0.25    # pairs; 2x runs
    corrected_pair_fraction: float = 0.07  # pairs per side; 4x runs total
    target_measurement: float = 66.5
    off_measurement: float = 60.0
    material_types: tuple[str, ...] = ("yeast-1",)

    @property
    def step_ms(self) -> int:
        return int(round(self.grid_seconds * 1000))

    def in_band_values(self) -> np.ndarray:
        return np.round(np.arange(self.band_low + self.dead_zone_h,
                                  self.band_high - self.dead_zone_h + 1e-9,
                                  self.in_band_step), 6)

    def below_values(self) -> np.ndarray:
        return np.round(np.arange(self.h_min,
                                  self.band_low - self.dead_zone_h + 1e-9,
                                  self.off_band_step), 6)

    def above_values(self) -> np.ndarray:
        return np.round(np.arange(self.band_high + self.dead_zone_h,
                                  self.h_max + 1e-9,
                                  self.off_band_step), 6)


@dataclass(frozen=True)
class RunPlan:
    batch_id: str
    material_type: str
    start_ms: int
    ticks: int
    h_start: float
    h_final: float          # differs from h_start on corrected runs
    s_base: float
    is_target: bool


def box_quality_config() -> QualityConfig:
    return QualityConfig(
        labels=("low", "target", "high"),
        target_label="target",
        bands={
            "low": Interval(-math.inf, 65.0),
            "target": Interval(65.0, 68.0),
            "high": Interval(68.0, math.inf),
        },
        aggregation="mean",
    )


def _plan_runs(scenario: BoxScenario, rng: np.random.Generator) -> list[RunPlan]:
    s = scenario
    n_in_pairs = int(round(s.n_runs * s.in_band_pair_fraction))
    n_corr_pairs = 2 * max(1, int(round(s.n_runs * s.corrected_pair_fraction)))
    n_off = s.n_runs - 2 * (n_in_pairs + n_corr_pairs)
    if n_off < 0:
        raise ValueError("pair counts exceed the run budget")

    in_values = s.in_band_values()
    below = s.below_values()
    above = s.above_values()

    def s_level(low_side: bool) -> float:
        if low_side:
            return float(rng.uniform(s.s_min, s.sensor_limit - s.dead_zone_s))
        return float(rng.uniform(s.sensor_limit + s.dead_zone_s, s.s_max))

    if n_off % 2 != 0:
        raise ValueError("run budget must keep steady off-band runs paired")

    # Runs are built in two-run units laid out adjacently, so a run-level
    # split at an even boundary never separates a balanced pair.
    units: list[list[tuple]] = []
    for _ in range(n_in_pairs):
        v = float(rng.choice(in_values))
        units.append([(v, v, s_level(True), True),
                      (v, v, s_level(False), False)])
    for i in range(n_corr_pairs):
        origin_grid = below if i % 2 == 0 else above
        o = float(origin_grid[(i // 2) % len(origin_grid)])
        v = float(rng.choice(in_values))
        units.append([(o, v, s_level(True), True),
                      (o, v, s_level(False), False)])
    for i in range(n_off // 2):
        grid = below if i % 2 == 0 else above
        o = float(rng.choice(grid))
        units.append([(o, o, s_level(False), False),
                      (o, o, s_level(False), False)])

    order = rng.permutation(len(units))
    plans: list[RunPlan] = []
    run_span = (s.ticks_per_run + s.gap_ticks) * s.step_ms
    i = 0
    for j in order:
        for h_start, h_final, s_base, is_target in units[j]:
            plans.append(RunPlan(
                batch_id=f"B{i:04d}",
                material_type=s.material_types[(i // 2) % len(s.material_types)],
                start_ms=EPOCH_2026 + i * run_span,
                ticks=s.ticks_per_run,
                h_start=h_start, h_final=h_final,
                s_base=s_base, is_target=is_target,
            ))
            i += 1
    return plans


def generate_box_dataset(out_dir, scenario: BoxScenario = BoxScenario(),
                         seed: int = 0) -> dict[str, Path]:
    """Write the four ingest files (plus configs) for a box scenario."""
    s = scenario
    rng = np.random.default_rng(seed)
    plans = _plan_runs(s, rng)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = [
        {"id": "s1", "name": "Level", "kind": "sensor", "units": "%"},
        {"id": "s2", "name": "Temperature", "kind": "sensor", "units": "degC"},
        {"id": "h1", "name": "Pressure", "kind": "setting", "units": "kPa"},
    ]
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n",
                             encoding="utf-8")

    obs_path = out / "observations.csv"
    runs_path = out / "runs.csv"
    quality_path = out / "quality.csv"

    with open(obs_path, "w", newline="", encoding="utf-8") as obs_fh, \
            open(runs_path, "w", newline="", encoding="utf-8") as runs_fh, \
            open(quality_path, "w", newline="", encoding="utf-8") as q_fh:
        obs = csv.writer(obs_fh)
        runs = csv.writer(runs_fh)
        quality = csv.writer(q_fh)
        obs.writerow(["timestamp", "s1", "s2", "h1"])
        runs.writerow(["batch_id", "start", "end", "material_type"])
        quality.writerow(["batch_id", "timestamp", "measurement"])

        for plan in plans:
            end_ms = plan.start_ms + (plan.ticks - 1) * s.step_ms
            runs.writerow([plan.batch_id, format_timestamp(plan.start_ms),
                           format_timestamp(end_ms), plan.material_type])
            sample_ticks = sorted({int(plan.ticks * f)
                                   for f in (0.75, 0.85, 0.95)})
            for tick in range(plan.ticks):
                t = plan.start_ms + tick * s.step_ms
                # Setup correction: off-spec initial pressure is fixed
                # after the first instant.
                h = plan.h_start if tick == 0 else plan.h_final
                s1 = plan.s_base + s.noise_sigma * float(rng.normal())
                s2 = 40.0 + 20.0 * float(rng.random())
                obs.writerow([format_timestamp(t), repr(s1), repr(s2), repr(h)])
                if tick in sample_ticks:
                    in_box = (s.band_low < h <= s.band_high) \
                        and plan.s_base <= s.sensor_limit
                    measurement = s.target_measurement if in_box \
                        else s.off_measurement
                    quality.writerow([plan.batch_id, format_timestamp(t),
                                      repr(measurement)])

    qc_path = out / "quality_config.json"
    qc_path.write_text(
        json.dumps(box_quality_config().to_dict(), indent=2) + "\n",
        encoding="utf-8")

    plant_path = out / "plant.json"
    plant_path.write_text(
        json.dumps(demo_plant_spec().to_dict(), indent=2) + "\n",
        encoding="utf-8")

    return {
        "manifest": manifest_path,
        "observations": obs_path,
        "runs": runs_path,
        "quality": quality_path,
        "quality_config": qc_path,
        "plant": plant_path,
    }


def demo_plant_spec() -> PlantSpec:
    """Live plant matching the box manifest, for serve/simulate demos.

    Starts off-band (h1 = 95) in a healthy sensor regime, so applying an
    in-band recommendation visibly improves the predicted likelihood.
    """
    return PlantSpec(
        sensor_ids=("s1", "s2"),
        setting_ids=("h1",),
        decay={"s1": 0.8, "s2": 0.5},
        response={},
        offsets={"s1": 9.0, "s2": 25.0},
        noise_sigma={"s1": 0.3, "s2": 0.5},
        lag_ticks={"h1": 2},
        initial_sensors={"s1": 45.0, "s2": 50.0},
        initial_settings={"h1": 95.0},
    )


def scenario_labels(plans: Sequence[RunPlan]) -> dict[str, bool]:
    return {p.batch_id: p.is_target for p in plans}
