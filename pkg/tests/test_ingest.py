"""File loading, grid alignment, new-settings derivation and labeling."""

import pytest

from plantstate.core import ProductionRun, QualityConfig
from plantstate.ingest import (
    QualitySample,
    align_snapshots,
    build_training_set,
    derive_new_settings,
    ingest_dataset,
    label_runs,
    load_dataset,
)

from util import simple_quality_config


def _write_small_dataset(tmp_path, obs_rows=None, runs_rows=None,
                         quality_rows=None):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        '[{"id": "s1", "name": "Level", "kind": "sensor", "units": "%"},'
        ' {"id": "s2", "name": "Temp", "kind": "sensor", "units": "C"},'
        ' {"id": "h1", "name": "Pressure", "kind": "setting", "units": "kPa"},'
        ' {"id": "h2", "name": "Flow", "kind": "setting", "units": "L"}]')

    obs = tmp_path / "observations.csv"
    if obs_rows is None:
        lines = ["timestamp,s1,s2,h1,h2"]
        for i in range(100):
            lines.append(f"2026-01-01T00:{i // 60:02d}:{i % 60:02d}Z,"
                         f"{10 + i},{20 + i},{5.0},{7.0}")
        obs_rows = "\n".join(lines)
    obs.write_text(obs_rows)

    runs = tmp_path / "runs.csv"
    if runs_rows is None:
        runs_rows = ("batch_id,start,end,material_type\n"
                     "B1,2026-01-01T00:00:00Z,2026-01-01T00:00:49Z,alpha\n"
                     "B2,2026-01-01T00:00:50Z,2026-01-01T00:01:39Z,alpha\n")
    runs.write_text(runs_rows)

    quality = tmp_path / "quality.csv"
    if quality_rows is None:
        quality_rows = ("batch_id,timestamp,measurement\n"
                        "B1,2026-01-01T00:00:40Z,66.0\n"
                        "B2,2026-01-01T00:01:30Z,60.0\n")
    quality.write_text(quality_rows)
    return manifest, obs, runs, quality


# -- loading -----------------------------------------------------------------

def test_load_dataset_fills_observed_ranges(tmp_path):
    paths = _write_small_dataset(tmp_path)
    manifest, tables, runs, quality = load_dataset(*paths)
    s1 = next(p for p in manifest if p.id == "s1")
    assert (s1.observed_min, s1.observed_max) == (10.0, 109.0)
    assert tables["sensor"].source_row_count == 100
    assert len(runs) == 2
    assert len(quality) == 2


def test_reference_scale_manifest_loads_thirty_parameters(tmp_path):
    params = [{"id": f"s{i}", "name": f"Sensor {i}", "kind": "sensor",
               "units": ""} for i in range(1, 24)]
    params += [{"id": f"h{i}", "name": f"Setting {i}", "kind": "setting",
                "units": ""} for i in range(1, 8)]
    import json

    from plantstate.ingest import load_manifest

    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(params))
    manifest = load_manifest(path)
    assert len(manifest) == 30
    assert sum(1 for p in manifest if p.kind == "sensor") == 23
    assert sum(1 for p in manifest if p.kind == "setting") == 7


def test_unknown_parameter_column_rejected(tmp_path):
    paths = _write_small_dataset(
        tmp_path, obs_rows="timestamp,s1,s2,h1,h2,mystery\n"
                           "2026-01-01T00:00:00Z,1,2,3,4,5\n")
    with pytest.raises(ValueError, match="unknown parameter column"):
        load_dataset(*paths)


def test_non_monotone_timestamps_rejected(tmp_path):
    paths = _write_small_dataset(
        tmp_path, obs_rows="timestamp,s1,s2,h1,h2\n"
                           "2026-01-01T00:00:10Z,1,2,3,4\n"
                           "2026-01-01T00:00:00Z,1,2,3,4\n")
    with pytest.raises(ValueError, match="non-monotone timestamps"):
        load_dataset(*paths)


def test_overlapping_runs_rejected(tmp_path):
    paths = _write_small_dataset(
        tmp_path, runs_rows="batch_id,start,end,material_type\n"
                            "B1,2026-01-01T00:00:00Z,2026-01-01T00:10:00Z,a\n"
                            "B2,2026-01-01T00:05:00Z,2026-01-01T00:15:00Z,a\n")
    with pytest.raises(ValueError, match="overlapping runs"):
        load_dataset(*paths)


# -- alignment ---------------------------------------------------------------

def test_identity_resampling_passes_values_through(tmp_path):
    paths = _write_small_dataset(tmp_path)
    _, tables, _, _ = load_dataset(*paths)
    result = align_snapshots(tables, 1.0)
    assert len(result.snapshots) == 100
    assert result.dropped_count == 0
    assert result.snapshots[3].sensors["s1"] == 13.0


def test_nearest_previous_fill_for_on_change_settings(tmp_path):
    # Setting recorded only on change at t=0 (5) and t=35 (7), grid 10 s.
    rows = ["timestamp,s1,s2,h1,h2"]
    for i in range(0, 60, 10):
        h1 = "" if i > 0 else "5"
        rows.append(f"2026-01-01T00:00:{i:02d}Z,1,2,{h1},9")
    rows.insert(5, "2026-01-01T00:00:35Z,1,2,7,9")
    paths = _write_small_dataset(tmp_path, obs_rows="\n".join(rows))
    _, tables, _, _ = load_dataset(*paths)
    result = align_snapshots(tables, 10.0)
    by_t = {s.t: s for s in result.snapshots}
    base = min(by_t)
    values = [by_t[base + k * 10_000].settings["h1"] for k in range(5)]
    assert values == [5.0, 5.0, 5.0, 5.0, 7.0]


def test_staleness_beyond_horizon_drops_instants(tmp_path):
    rows = ["timestamp,s1,s2,h1,h2"]
    rows.append("2026-01-01T00:00:00Z,1,2,3,4")
    # s1 goes silent for 100 s (> 5 * 10 s horizon); others keep reporting.
    for i in range(10, 140, 10):
        s1 = "" if i <= 100 else "1"
        rows.append(f"2026-01-01T00:{i // 60:02d}:{i % 60:02d}Z,{s1},2,3,4")
    paths = _write_small_dataset(tmp_path, obs_rows="\n".join(rows))
    _, tables, _, _ = load_dataset(*paths)
    result = align_snapshots(tables, 10.0)
    assert result.dropped_count > 0
    assert result.grid_count == len(result.snapshots) + result.dropped_count


def test_empty_after_alignment_rejected(tmp_path):
    rows = ["timestamp,s1,s2,h1,h2",
            "2026-01-01T00:00:00Z,1,,3,4",     # s2 never fresh with s1
            "2026-01-01T01:00:00Z,,2,3,4"]
    paths = _write_small_dataset(tmp_path, obs_rows="\n".join(rows))
    _, tables, _, _ = load_dataset(*paths)
    with pytest.raises(ValueError, match="empty after alignment"):
        align_snapshots(tables, 10.0)


# -- new settings ------------------------------------------------------------

def _aligned(tmp_path, obs_rows=None):
    paths = _write_small_dataset(tmp_path, obs_rows=obs_rows)
    manifest, tables, runs, quality = load_dataset(*paths)
    return align_snapshots(tables, 1.0).snapshots, runs


def test_unchanged_settings_copy_forward(tmp_path):
    snapshots, runs = _aligned(tmp_path)
    derived = derive_new_settings(snapshots, runs)
    for snap in derived:
        assert snap.new_settings == dict(snap.settings)


def test_settings_change_appears_one_instant_early(tmp_path):
    rows = ["timestamp,s1,s2,h1,h2"]
    for i in range(10):
        h1 = 80.0 if i < 5 else 70.0
        rows.append(f"2026-01-01T00:00:{i:02d}Z,1,2,{h1},4")
    snapshots, runs = _aligned(tmp_path, obs_rows="\n".join(rows))
    derived = derive_new_settings(snapshots)
    assert derived[4].settings["h1"] == 80.0
    assert derived[4].new_settings["h1"] == 70.0  # reduction visible at t
    assert derived[3].new_settings["h1"] == 80.0


def test_final_instant_of_each_run_keeps_its_settings(tmp_path):
    rows = ["timestamp,s1,s2,h1,h2"]
    for i in range(10):
        rows.append(f"2026-01-01T00:00:{i:02d}Z,1,2,{float(i)},4")
    runs_rows = ("batch_id,start,end,material_type\n"
                 "B1,2026-01-01T00:00:00Z,2026-01-01T00:00:04Z,a\n"
                 "B2,2026-01-01T00:00:05Z,2026-01-01T00:00:09Z,a\n")
    paths = _write_small_dataset(tmp_path, obs_rows="\n".join(rows),
                                 runs_rows=runs_rows)
    _, tables, runs, _ = load_dataset(*paths)
    snapshots = align_snapshots(tables, 1.0).snapshots
    derived = derive_new_settings(snapshots, runs)
    # Run boundary between index 4 and 5: no carry across runs.
    assert derived[4].new_settings["h1"] == 4.0
    assert derived[5].new_settings["h1"] == 6.0


def test_single_snapshot_run_is_its_own_boundary(tmp_path):
    snapshots, _ = _aligned(tmp_path)
    derived = derive_new_settings(snapshots[:1])
    assert derived[0].new_settings == dict(derived[0].settings)


def test_derive_new_settings_is_idempotent(tmp_path):
    snapshots, runs = _aligned(tmp_path)
    once = derive_new_settings(snapshots, runs)
    twice = derive_new_settings(once, runs)
    assert once == twice


# -- run labeling ------------------------------------------------------------

def _run(batch="B1", start=0, end=100_000):
    return ProductionRun(batch_id=batch, start=start, end=end)


def test_mean_mode_uses_band_of_mean():
    qc = simple_quality_config()  # target band (65, 68]
    samples = [QualitySample("B1", 10, 66.1), QualitySample("B1", 20, 66.9)]
    assert label_runs([_run()], samples, qc) == {"B1": "target"}


def test_mean_on_band_boundary_is_half_open():
    qc = simple_quality_config()
    samples = [QualitySample("B1", 10, 60.0), QualitySample("B1", 20, 70.0)]
    assert label_runs([_run()], samples, qc) == {"B1": "low"}


def test_majority_in_band_reaches_threshold():
    qc = QualityConfig(
        labels=("low", "target", "high"), target_label="target",
        bands=simple_quality_config().bands,
        aggregation="majorityInBand", in_band_threshold=0.5)
    samples = [QualitySample("B1", 1, 66.0), QualitySample("B1", 2, 66.0),
               QualitySample("B1", 3, 90.0)]
    assert label_runs([_run()], samples, qc) == {"B1": "target"}


def test_majority_below_threshold_falls_back_to_mean_band():
    qc = QualityConfig(
        labels=("low", "target", "high"), target_label="target",
        bands=simple_quality_config().bands,
        aggregation="majorityInBand", in_band_threshold=0.9)
    samples = [QualitySample("B1", 1, 66.0), QualitySample("B1", 2, 90.0)]
    # mean 78 -> high band
    assert label_runs([_run()], samples, qc) == {"B1": "high"}


def test_last_sample_mode_uses_final_measurement():
    qc = QualityConfig(
        labels=("low", "target", "high"), target_label="target",
        bands=simple_quality_config().bands, aggregation="lastSample")
    samples = [QualitySample("B1", 5, 60.0), QualitySample("B1", 9, 66.5)]
    assert label_runs([_run()], samples, qc) == {"B1": "target"}


def test_runs_without_samples_are_excluded():
    qc = simple_quality_config()
    labels = label_runs([_run("B1"), _run("B2", 200_000, 300_000)],
                        [QualitySample("B1", 10, 66.0)], qc)
    assert labels == {"B1": "target"}


def test_mean_mode_is_permutation_invariant():
    qc = simple_quality_config()
    samples = [QualitySample("B1", t, m)
               for t, m in ((1, 60.0), (2, 66.0), (3, 70.0), (4, 67.0))]
    forward = label_runs([_run()], samples, qc)
    backward = label_runs([_run()], list(reversed(samples)), qc)
    assert forward == backward


# -- correlation -------------------------------------------------------------

def test_full_pipeline_counters_are_conserved(tmp_path):
    paths = _write_small_dataset(tmp_path)
    dataset = ingest_dataset(*paths, quality_config=simple_quality_config(),
                             grid_seconds=1.0)
    report = dataset.report
    assert report.grid_count == report.aligned_count + report.dropped_count
    assert report.training_samples == len(dataset.training_set.samples)
    assert report.training_samples + report.snapshots_outside_runs \
        == report.aligned_count
    for sample in dataset.training_set.samples:
        assert sample.label == dataset.training_set.per_run_label[
            sample.run_batch_id]


def test_snapshots_between_runs_are_discarded(tmp_path):
    runs_rows = ("batch_id,start,end,material_type\n"
                 "B1,2026-01-01T00:00:00Z,2026-01-01T00:00:30Z,a\n"
                 "B2,2026-01-01T00:00:40Z,2026-01-01T00:01:39Z,a\n")
    quality_rows = ("batch_id,timestamp,measurement\n"
                    "B1,2026-01-01T00:00:20Z,66.0\n"
                    "B2,2026-01-01T00:01:00Z,60.0\n")
    paths = _write_small_dataset(tmp_path, runs_rows=runs_rows,
                                 quality_rows=quality_rows)
    dataset = ingest_dataset(*paths, quality_config=simple_quality_config(),
                             grid_seconds=1.0)
    # Instants 31..39 fall between the runs.
    assert dataset.report.snapshots_outside_runs == 9
    assert len(dataset.training_set.samples) == 31 + 60


def test_runs_excluded_by_labeling_cascade_to_their_snapshots(tmp_path):
    quality_rows = ("batch_id,timestamp,measurement\n"
                    "B1,2026-01-01T00:00:40Z,66.0\n")  # B2 has no samples
    paths = _write_small_dataset(tmp_path, quality_rows=quality_rows)
    dataset = ingest_dataset(*paths, quality_config=simple_quality_config(),
                             grid_seconds=1.0)
    assert dataset.report.runs_excluded_no_quality == 1
    assert {s.run_batch_id for s in dataset.training_set.samples} == {"B1"}


def test_empty_training_set_rejected(tmp_path):
    runs_rows = ("batch_id,start,end,material_type\n"
                 "B9,2027-06-01T00:00:00Z,2027-06-01T01:00:00Z,a\n")
    quality_rows = "batch_id,timestamp,measurement\nB9,2027-06-01T00:30:00Z,66\n"
    paths = _write_small_dataset(tmp_path, runs_rows=runs_rows,
                                 quality_rows=quality_rows)
    manifest, tables, runs, quality = load_dataset(*paths)
    snapshots = derive_new_settings(align_snapshots(tables, 1.0).snapshots,
                                    runs)
    with pytest.raises(ValueError, match="empty training set"):
        build_training_set(snapshots, runs, {"B9": "target"},
                           (0, 1), manifest, simple_quality_config())


def test_training_set_windows_filter_runs(tmp_path):
    paths = _write_small_dataset(tmp_path)
    manifest, tables, runs, quality = load_dataset(*paths)
    snapshots = derive_new_settings(align_snapshots(tables, 1.0).snapshots,
                                    runs)
    labels = {"B1": "target", "B2": "low"}
    window = (runs[0].start, runs[0].end)  # only B1 fits
    ts = build_training_set(snapshots, runs, labels, window, manifest,
                            simple_quality_config())
    assert set(ts.per_run_label) == {"B1"}
    assert len(ts.samples) == 50
