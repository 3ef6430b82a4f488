"""Command-line entry points for the whole engine.

Subcommands: train, evaluate, export-states, predict, recommend, serve,
simulate, synth-data, dump-tree. See README for file formats.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import pandas as pd

from plantstate.analytics import CompositeMatcher
from plantstate.core import (
    MachineStatus,
    ProcessSnapshot,
    QualityConfig,
    canonical_json,
    load_bundle,
    save_bundle,
    sensor_ids,
    setting_ids,
    validate_bundle,
)
from plantstate.estimator import train_model
from plantstate.ingest import ingest_dataset
from plantstate.states import states_table
from plantstate.tree import dump_tree


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="manifest JSON path")
    p.add_argument("--data", required=True, help="observations CSV path")
    p.add_argument("--runs", required=True, help="runs CSV path")
    p.add_argument("--quality", required=True, help="quality CSV path")
    p.add_argument("--quality-config", required=True,
                   help="quality banding/aggregation JSON path")
    p.add_argument("--grid-seconds", type=float, default=10.0)
    p.add_argument("--staleness-steps", type=int, default=5)


def _load_quality_config(path) -> QualityConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return QualityConfig.from_dict(json.load(fh))


def _ingest(args):
    return ingest_dataset(
        args.manifest, args.data, args.runs, args.quality,
        _load_quality_config(args.quality_config),
        grid_seconds=args.grid_seconds,
        staleness_steps=args.staleness_steps,
    )


def cmd_train(args) -> int:
    dataset = _ingest(args)
    bundle = train_model(dataset.training_set, args.min_leaf_size,
                         decision_threshold=args.threshold,
                         fingerprint=dataset.fingerprint)
    violations = validate_bundle(bundle)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return 1
    save_bundle(bundle, args.bundle)
    if args.report:
        Path(args.report).write_text(
            canonical_json(dataset.report.to_dict()) + "\n", encoding="utf-8")
    supported = sum(1 for c in bundle.composites if c.supported)
    print(f"trained bundle -> {args.bundle}")
    print(f"  samples={len(dataset.training_set.samples)} "
          f"runs={len(dataset.training_set.per_run_label)}")
    print(f"  states: status={len(bundle.status_states)} "
          f"settings={len(bundle.settings_states)} "
          f"composites={len(bundle.composites)} (supported={supported})")
    return 0


def cmd_evaluate(args) -> int:
    from plantstate.evaluation import (
        SplitSpec,
        summary_table,
        sweep_min_leaf_size,
        write_report_files,
    )

    dataset = _ingest(args)
    leaf_sizes = [int(x) for x in args.leaf_sizes.split(",")]
    kind, _, fraction = args.split.partition(":")
    split = SplitSpec(kind=kind, train_fraction=float(fraction or 0.75),
                      seed=args.seed)
    report = sweep_min_leaf_size(dataset, leaf_sizes, split=split,
                                 decision_threshold=args.threshold)
    written = write_report_files(report, args.out_dir)
    print(summary_table(report))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_export_states(args) -> int:
    bundle = load_bundle(args.bundle)
    states = bundle.status_states if args.space == "status" \
        else bundle.settings_states
    header, rows = states_table(states, bundle.manifest)
    out = Path(args.out) if args.out else None
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out:
            fh.close()
            print(f"wrote {out}")
    return 0


def _snapshot_frame(path):
    frame = pd.read_csv(path, dtype={"timestamp": str})
    if "timestamp" not in frame.columns:
        raise SystemExit("snapshot CSV lacks a timestamp column")
    return frame


def _row_status(row, sensors, settings) -> MachineStatus:
    return MachineStatus(
        sensors={k: float(row[k]) for k in sensors},
        settings={k: float(row[k]) for k in settings},
    )


def cmd_predict(args) -> int:
    bundle = load_bundle(args.bundle)
    matcher = CompositeMatcher.from_bundle(bundle)
    sensors = sensor_ids(bundle.manifest)
    settings = setting_ids(bundle.manifest)
    frame = _snapshot_frame(args.data)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "verdict", "likelihood", "composite_id",
                         "popularity", "matched_count"])
        for _, row in frame.iterrows():
            new = {}
            for k in settings:
                col = f"{k}__new"
                new[k] = float(row[col]) if col in frame.columns \
                    else float(row[k])
            snap = ProcessSnapshot(status=_row_status(row, sensors, settings),
                                   new_settings=new)
            p = matcher.predict_quality(snap, args.threshold)
            writer.writerow([
                row["timestamp"], p.verdict,
                "" if p.likelihood is None else repr(p.likelihood),
                p.composite_id or "", p.popularity or 0, p.matched_count,
            ])
    print(f"wrote {args.out}")
    return 0


def cmd_recommend(args) -> int:
    bundle = load_bundle(args.bundle)
    matcher = CompositeMatcher.from_bundle(bundle)
    sensors = sensor_ids(bundle.manifest)
    settings = setting_ids(bundle.manifest)
    frame = _snapshot_frame(args.data)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["timestamp", "composite_id", "expected_goodness", "support"]
        for k in settings:
            header += [f"{k}_low", f"{k}_high", f"{k}_point"]
        writer.writerow(header)
        for _, row in frame.iterrows():
            status = _row_status(row, sensors, settings)
            try:
                rec = matcher.recommend_settings(status)
            except ValueError:
                writer.writerow([row["timestamp"], "out-of-regime", "", ""]
                                + [""] * (3 * len(settings)))
                continue
            cells = [row["timestamp"], rec.composite_id,
                     repr(rec.expected_goodness), rec.support]
            for k in settings:
                iv = rec.settings_intervals[k]
                cells += [iv.to_dict()["low"], iv.to_dict()["high"],
                          repr(rec.point_settings[k])]
            writer.writerow(cells)
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from plantstate.runtime.server import create_app

    bundle = load_bundle(args.bundle)
    app = create_app(bundle, static_dir=args.static, log_dir=args.log_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_simulate(args) -> int:
    from plantstate.runtime.plant import PlantSpec
    from plantstate.runtime.session import (
        MODE_SYNTHETIC,
        Session,
        SessionConfig,
    )

    bundle = load_bundle(args.bundle)
    plant = PlantSpec.load(args.plant)
    config = SessionConfig(
        mode=MODE_SYNTHETIC,
        tick_interval_ms=int(args.grid_seconds * 1000),
        seed=args.seed,
        plant=plant,
        decision_threshold=args.threshold,
        recommend_each_tick=args.recommend_each_tick,
        max_ticks=args.ticks,
    )
    session = Session(config, bundle)
    script = []
    if args.script:
        with open(args.script, "r", encoding="utf-8") as fh:
            script = json.load(fh)
    by_tick: dict[int, list[dict]] = {}
    for action in script:
        by_tick.setdefault(int(action["tick"]), []).append(action)

    while True:
        for action in by_tick.get(session.tick_count, []):
            if "settings" in action:
                session.apply_settings(action["settings"])
            if "quality" in action:
                session.record_quality_sample(action["quality"])
        event = session.step()
        if event is None:
            break
    summary = session.close()
    session.log.dump(args.out)
    print(f"wrote {args.out} ({summary['ticks']} ticks, "
          f"final label: {summary['finalLabel']})")
    return 0


def cmd_synth_data(args) -> int:
    from plantstate.synthetic import BoxScenario, generate_box_dataset

    scenario = BoxScenario(
        n_runs=args.runs_count,
        ticks_per_run=args.ticks,
        grid_seconds=args.grid_seconds,
        material_types=tuple(args.material_types.split(",")),
    )
    paths = generate_box_dataset(args.out_dir, scenario, seed=args.seed)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def cmd_dump_tree(args) -> int:
    bundle = load_bundle(args.bundle)
    tree = bundle.status_tree if args.space == "status" \
        else bundle.settings_tree
    print(dump_tree(tree))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plantstate",
        description="Interpretable machine-state analytics for product quality",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="ingest data and train a model bundle")
    _add_dataset_args(p)
    p.add_argument("--min-leaf-size", type=int, default=30)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--bundle", required=True, help="output bundle path")
    p.add_argument("--report", help="optional ingest report JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="minimum-leaf-size sweep report")
    _add_dataset_args(p)
    p.add_argument("--leaf-sizes", default="1,10,30,90")
    p.add_argument("--split", default="temporal:0.75",
                   help="temporal:FRACTION or random:FRACTION")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-states", help="states as a CSV table")
    p.add_argument("--bundle", required=True)
    p.add_argument("--space", choices=["status", "newSettings"],
                   default="status")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_states)

    p = sub.add_parser("predict", help="batch quality prediction over a CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True,
                   help="snapshot CSV (timestamp, sensors, settings, "
                        "optional <setting>__new columns)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("recommend", help="batch recommendations over a CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True,
                   help="status CSV (timestamp, sensors, settings)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("serve", help="start the HTTP/SSE API")
    p.add_argument("--bundle", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8600)
    p.add_argument("--static", help="directory of console assets to serve")
    p.add_argument("--log-dir", help="where closed sessions dump their logs")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="headless synthetic session")
    p.add_argument("--bundle", required=True)
    p.add_argument("--plant", required=True, help="plant spec JSON")
    p.add_argument("--ticks", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-seconds", type=float, default=10.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--recommend-each-tick", action="store_true")
    p.add_argument("--script", help="JSON list of {tick, settings|quality}")
    p.add_argument("--out", required=True, help="session log JSONL path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth-data", help="generate a demo dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--runs-count", type=int, default=200)
    p.add_argument("--ticks", type=int, default=60)
    p.add_argument("--grid-seconds", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--material-types", default="yeast-1")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("dump-tree", help="print a bundle's tree as text rules")
    p.add_argument("--bundle", required=True)
    p.add_argument("--space", choices=["status", "newSettings"],
                   default="status")
    p.set_defaults(func=cmd_dump_tree)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
