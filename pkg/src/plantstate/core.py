"""Domain types shared across the engine, with validation and canonical JSON.

Everything here is immutable after construction. Observations are plain
``dict[str, float]`` maps keyed by parameter id; timestamps are UTC epoch
milliseconds (``int``) so equality and ordering are exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence

from plantstate.tree import DecisionTree

FORMAT_VERSION = 1

SPACE_STATUS = "status"
SPACE_NEW_SETTINGS = "newSettings"
SPACES = (SPACE_STATUS, SPACE_NEW_SETTINGS)

KIND_SENSOR = "sensor"
KIND_SETTING = "setting"

AGGREGATION_MODES = ("mean", "lastSample", "majorityInBand")

VERDICT_TARGET = "target"
VERDICT_OFF_TARGET = "offTarget"
VERDICT_UNKNOWN = "unknown"


class MissingParameterError(ValueError):
    """An observation lacks a parameter that a state or tree constrains."""


# ---------------------------------------------------------------------------
# Timestamps
# ---------------------------------------------------------------------------

def parse_timestamp(text: str) -> int:
    """Parse an RFC 3339 timestamp to UTC epoch milliseconds."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def format_timestamp(ms: int) -> str:
    """Render epoch milliseconds as RFC 3339 with millisecond precision."""
    dt = datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ms % 1000:03d}Z"


# ---------------------------------------------------------------------------
# Parameters and snapshots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterDef:
    """One machine parameter: a sensor reading or an operator setting."""

    id: str
    name: str
    kind: str  # "sensor" | "setting"
    units: str = ""
    observed_min: Optional[float] = None
    observed_max: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in (KIND_SENSOR, KIND_SETTING):
            raise ValueError(f"unknown parameter kind: {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "kind": self.kind,
            "units": self.units,
            "observedMin": self.observed_min,
            "observedMax": self.observed_max,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "ParameterDef":
        return ParameterDef(
            id=d["id"],
            name=d.get("name", d["id"]),
            kind=d["kind"],
            units=d.get("units", "") or "",
            observed_min=d.get("observedMin"),
            observed_max=d.get("observedMax"),
        )


def sensor_ids(manifest: Sequence[ParameterDef]) -> list[str]:
    return [p.id for p in manifest if p.kind == KIND_SENSOR]


def setting_ids(manifest: Sequence[ParameterDef]) -> list[str]:
    return [p.id for p in manifest if p.kind == KIND_SETTING]


def status_param_ids(manifest: Sequence[ParameterDef]) -> list[str]:
    """Parameter ids of the status space: sensors and applied settings,
    in manifest order."""
    return [p.id for p in manifest]


def space_param_ids(manifest: Sequence[ParameterDef], space: str) -> list[str]:
    if space == SPACE_STATUS:
        return status_param_ids(manifest)
    if space == SPACE_NEW_SETTINGS:
        return setting_ids(manifest)
    raise ValueError(f"unknown space: {space!r}")


def check_manifest(manifest: Sequence[ParameterDef]) -> None:
    seen: set[str] = set()
    for p in manifest:
        if p.id in seen:
            raise ValueError(f"duplicate parameter id: {p.id}")
        seen.add(p.id)


@dataclass(frozen=True)
class MachineSnapshot:
    """All instantaneous machine data at one time instant.

    ``new_settings`` is None until the ingest pipeline derives it from the
    next aligned instant of the same production run.
    """

    t: int
    sensors: Mapping[str, float]
    settings: Mapping[str, float]
    new_settings: Optional[Mapping[str, float]] = None

    def status(self) -> "MachineStatus":
        return MachineStatus(sensors=self.sensors, settings=self.settings)

    def process(self) -> "ProcessSnapshot":
        if self.new_settings is None:
            raise ValueError("new settings not derived yet")
        return ProcessSnapshot(status=self.status(), new_settings=self.new_settings)

    def with_new_settings(self, values: Mapping[str, float]) -> "MachineSnapshot":
        return MachineSnapshot(
            t=self.t, sensors=self.sensors, settings=self.settings,
            new_settings=dict(values),
        )


@dataclass(frozen=True)
class MachineStatus:
    """Sensor observations plus the currently applied settings."""

    sensors: Mapping[str, float]
    settings: Mapping[str, float]

    def observation(self) -> dict[str, float]:
        """Single observation map over the status space (ids are disjoint)."""
        merged = dict(self.sensors)
        merged.update(self.settings)
        return merged


@dataclass(frozen=True)
class ProcessSnapshot:
    """A machine status paired with the new settings taking effect next."""

    status: MachineStatus
    new_settings: Mapping[str, float]


@dataclass(frozen=True)
class ProductionRun:
    """Contiguous manufacture of one batch over a time window."""

    batch_id: str
    start: int
    end: int
    material_type: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError(f"run {self.batch_id}: start must precede end")

    def contains(self, t: int) -> bool:
        return self.start <= t <= self.end

    def to_dict(self) -> dict:
        return {
            "batchId": self.batch_id,
            "start": self.start,
            "end": self.end,
            "materialType": self.material_type,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "ProductionRun":
        return ProductionRun(
            batch_id=d["batchId"], start=d["start"], end=d["end"],
            material_type=d.get("materialType"),
        )


def check_runs_disjoint(runs: Sequence[ProductionRun]) -> None:
    ordered = sorted(runs, key=lambda r: r.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start <= prev.end:
            raise ValueError(
                f"overlapping runs: {prev.batch_id} and {cur.batch_id}"
            )
    seen: set[str] = set()
    for r in runs:
        if r.batch_id in seen:
            raise ValueError(f"duplicate batch id: {r.batch_id}")
        seen.add(r.batch_id)


# ---------------------------------------------------------------------------
# Quality configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QualityConfig:
    """How raw quality measurements become the per-run quality label."""

    labels: tuple[str, ...]
    target_label: str
    bands: Mapping[str, "Interval"]
    aggregation: str = "mean"
    in_band_threshold: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        for msg in self.violations():
            raise ValueError(msg)

    def violations(self) -> list[str]:
        out: list[str] = []
        if self.target_label not in self.labels:
            out.append(f"target label {self.target_label!r} not in labels")
        if self.aggregation not in AGGREGATION_MODES:
            out.append(f"unknown aggregation mode: {self.aggregation!r}")
        if not 0.0 <= self.in_band_threshold <= 1.0:
            out.append("inBandThreshold out of [0, 1]")
        if set(self.bands) != set(self.labels):
            out.append("bands must define exactly one interval per label")
            return out
        # Bands must tile the measurement range: contiguous, non-overlapping.
        ordered = sorted(self.bands.items(), key=lambda kv: kv[1].low)
        for (_, a), (label_b, b) in zip(ordered, ordered[1:]):
            if b.low != a.high:
                out.append(f"quality bands overlap or leave a gap at {label_b!r}")
        return out

    def band_for(self, measurement: float) -> str:
        """Label of the band containing the measurement (half-open intervals)."""
        for label, band in self.bands.items():
            if interval_contains(band, measurement):
                return label
        raise ValueError(f"measurement outside quality bands: {measurement}")

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "targetLabel": self.target_label,
            "bands": {k: v.to_dict() for k, v in self.bands.items()},
            "aggregation": self.aggregation,
            "inBandThreshold": self.in_band_threshold,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "QualityConfig":
        return QualityConfig(
            labels=tuple(d["labels"]),
            target_label=d["targetLabel"],
            bands={k: Interval.from_dict(v) for k, v in d["bands"].items()},
            aggregation=d.get("aggregation", "mean"),
            in_band_threshold=d.get("inBandThreshold", 0.5),
        )


# ---------------------------------------------------------------------------
# Intervals and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Half-open interval (low, high]; infinite bounds mean unconstrained."""

    low: float = -math.inf
    high: float = math.inf

    def __post_init__(self) -> None:
        # Coerce to float so construction from ints serializes canonically.
        object.__setattr__(self, "low", float(self.low))
        object.__setattr__(self, "high", float(self.high))
        if math.isnan(self.low) or math.isnan(self.high):
            raise ValueError("interval bound is NaN")
        if not self.low < self.high:
            raise ValueError(f"empty interval ({self.low}, {self.high}]")

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.low) and math.isinf(self.high)

    def to_dict(self) -> dict:
        return {
            "low": None if math.isinf(self.low) else self.low,
            "high": None if math.isinf(self.high) else self.high,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "Interval":
        low = d.get("low")
        high = d.get("high")
        return Interval(
            low=-math.inf if low is None else float(low),
            high=math.inf if high is None else float(high),
        )


def interval_contains(iv: Interval, v: float) -> bool:
    """Membership test: v > low and v <= high."""
    if math.isnan(v):
        raise ValueError("non-finite observation")
    return iv.low < v <= iv.high


@dataclass(frozen=True)
class State:
    """A hyperrectangle over one parameter space, scored against history.

    Every parameter of the space has an interval; unconstrained parameters
    carry (-inf, +inf]. ``goodness`` is the fraction of matching historical
    snapshots whose production run achieved the target quality, defined only
    when ``popularity`` > 0.
    """

    id: str
    space: str
    intervals: Mapping[str, Interval]
    popularity: int = 0
    goodness: Optional[float] = None

    def __post_init__(self) -> None:
        if self.space not in SPACES:
            raise ValueError(f"unknown space: {self.space!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "space": self.space,
            "intervals": {k: v.to_dict() for k, v in self.intervals.items()},
            "popularity": self.popularity,
            "goodness": self.goodness,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "State":
        return State(
            id=d["id"],
            space=d["space"],
            intervals={k: Interval.from_dict(v) for k, v in d["intervals"].items()},
            popularity=d.get("popularity", 0),
            goodness=d.get("goodness"),
        )


def state_matches(state: State, obs: Mapping[str, float]) -> bool:
    """True iff the observation lies inside every interval of the state.

    Parameters with a finite bound must be present in the observation;
    fully unconstrained parameters may be absent.
    """
    for pid, iv in state.intervals.items():
        if pid not in obs:
            if iv.unbounded:
                continue
            raise MissingParameterError(f"missing parameter: {pid}")
        if not interval_contains(iv, obs[pid]):
            return False
    return True


@dataclass(frozen=True)
class CompositeState:
    """A status state paired with a settings state, scored jointly.

    A composite with popularity 0 never co-occurred in training; it is kept
    in the bundle but is unmatchable for prediction and never recommended.
    """

    id: str
    status_state_id: str
    settings_state_id: str
    popularity: int
    goodness: Optional[float]

    @property
    def supported(self) -> bool:
        return self.popularity > 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "statusStateId": self.status_state_id,
            "settingsStateId": self.settings_state_id,
            "popularity": self.popularity,
            "goodness": self.goodness,
            "supported": self.supported,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "CompositeState":
        return CompositeState(
            id=d["id"],
            status_state_id=d["statusStateId"],
            settings_state_id=d["settingsStateId"],
            popularity=d["popularity"],
            goodness=d.get("goodness"),
        )


# ---------------------------------------------------------------------------
# Model bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelBundle:
    """The fully trained artifact, serializable to a single JSON document."""

    manifest: tuple[ParameterDef, ...]
    quality_config: QualityConfig
    training_window: tuple[int, int]
    min_leaf_size: int
    status_tree: DecisionTree
    settings_tree: DecisionTree
    status_states: tuple[State, ...]
    settings_states: tuple[State, ...]
    composites: tuple[CompositeState, ...]
    dataset_fingerprint: str = ""
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "manifest", tuple(self.manifest))
        object.__setattr__(self, "status_states", tuple(self.status_states))
        object.__setattr__(self, "settings_states", tuple(self.settings_states))
        object.__setattr__(self, "composites", tuple(self.composites))

    def state_by_id(self, state_id: str) -> State:
        for s in self.status_states:
            if s.id == state_id:
                return s
        for s in self.settings_states:
            if s.id == state_id:
                return s
        raise KeyError(state_id)

    def to_dict(self) -> dict:
        return {
            "formatVersion": self.format_version,
            "manifest": [p.to_dict() for p in self.manifest],
            "qualityConfig": self.quality_config.to_dict(),
            "trainingWindow": list(self.training_window),
            "minLeafSize": self.min_leaf_size,
            "statusTree": self.status_tree.to_dict(),
            "settingsTree": self.settings_tree.to_dict(),
            "statusStates": [s.to_dict() for s in self.status_states],
            "settingsStates": [s.to_dict() for s in self.settings_states],
            "composites": [c.to_dict() for c in self.composites],
            "datasetFingerprint": self.dataset_fingerprint,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "ModelBundle":
        return ModelBundle(
            manifest=tuple(ParameterDef.from_dict(p) for p in d["manifest"]),
            quality_config=QualityConfig.from_dict(d["qualityConfig"]),
            training_window=(d["trainingWindow"][0], d["trainingWindow"][1]),
            min_leaf_size=d["minLeafSize"],
            status_tree=DecisionTree.from_dict(d["statusTree"]),
            settings_tree=DecisionTree.from_dict(d["settingsTree"]),
            status_states=tuple(State.from_dict(s) for s in d["statusStates"]),
            settings_states=tuple(State.from_dict(s) for s in d["settingsStates"]),
            composites=tuple(CompositeState.from_dict(c) for c in d["composites"]),
            dataset_fingerprint=d.get("datasetFingerprint", ""),
            format_version=d.get("formatVersion", FORMAT_VERSION),
        )


def canonical_json(payload: dict) -> str:
    """Serialize with sorted keys and shortest round-trip floats.

    The same structure always yields byte-identical output, so bundle and
    session-log files can be compared with plain file equality.
    """
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"),
        ensure_ascii=False, allow_nan=False,
    )


def serialize_bundle(bundle: ModelBundle) -> str:
    return canonical_json(bundle.to_dict()) + "\n"


def deserialize_bundle(text: str) -> ModelBundle:
    return ModelBundle.from_dict(json.loads(text))


def save_bundle(bundle: ModelBundle, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_bundle(bundle))


def load_bundle(path) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize_bundle(fh.read())


def dataset_fingerprint(chunks: Iterable[bytes]) -> str:
    """Content hash binding a bundle to the exact ingested inputs."""
    digest = hashlib.sha256()
    for chunk in chunks:
        digest.update(chunk)
    return "sha256:" + digest.hexdigest()


# ---------------------------------------------------------------------------
# Bundle validation
# ---------------------------------------------------------------------------

def _check_state(state: State, param_ids: set[str], space_ids: list[str],
                 violations: list[str]) -> None:
    if set(state.intervals) != set(space_ids):
        violations.append(
            f"state {state.id}: intervals must cover every parameter "
            f"of space {state.space}"
        )
    for pid in state.intervals:
        if pid not in param_ids:
            violations.append(f"state {state.id}: unknown parameter {pid}")
    if state.popularity < 0:
        violations.append(f"state {state.id}: negative popularity")
    if state.goodness is not None and not 0.0 <= state.goodness <= 1.0:
        violations.append(
            f"goodness out of range: state {state.id} has {state.goodness}"
        )
    if state.popularity > 0 and state.goodness is None:
        violations.append(f"state {state.id}: goodness missing despite matches")


def validate_bundle(bundle: ModelBundle) -> list[str]:
    """Check every type invariant; violations are returned, never raised."""
    violations: list[str] = []

    ids = [p.id for p in bundle.manifest]
    param_ids = set(ids)
    if len(param_ids) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        violations.append(f"duplicate parameter ids: {', '.join(dupes)}")

    violations.extend(bundle.quality_config.violations())

    t0, t1 = bundle.training_window
    if t0 > t1:
        violations.append("training window start after end")
    if bundle.min_leaf_size < 1:
        violations.append("minLeafSize must be >= 1")

    status_ids = status_param_ids(bundle.manifest)
    new_ids = setting_ids(bundle.manifest)
    for state in bundle.status_states:
        if state.space != SPACE_STATUS:
            violations.append(f"state {state.id}: wrong space {state.space}")
        _check_state(state, param_ids, status_ids, violations)
    for state in bundle.settings_states:
        if state.space != SPACE_NEW_SETTINGS:
            violations.append(f"state {state.id}: wrong space {state.space}")
        _check_state(state, param_ids, new_ids, violations)

    known_status = {s.id for s in bundle.status_states}
    known_settings = {s.id for s in bundle.settings_states}
    for comp in bundle.composites:
        if comp.status_state_id not in known_status:
            violations.append(f"dangling state ref: {comp.id} -> {comp.status_state_id}")
        if comp.settings_state_id not in known_settings:
            violations.append(f"dangling state ref: {comp.id} -> {comp.settings_state_id}")
        if comp.popularity < 0:
            violations.append(f"composite {comp.id}: negative popularity")
        if comp.goodness is not None and not 0.0 <= comp.goodness <= 1.0:
            violations.append(
                f"goodness out of range: composite {comp.id} has {comp.goodness}"
            )
        if comp.popularity > 0 and comp.goodness is None:
            violations.append(f"composite {comp.id}: goodness missing despite support")
        if comp.popularity == 0 and comp.goodness is not None:
            violations.append(f"composite {comp.id}: goodness defined without support")

    if bundle.status_tree.space != SPACE_STATUS:
        violations.append("status tree trained on wrong space")
    if bundle.settings_tree.space != SPACE_NEW_SETTINGS:
        violations.append("settings tree trained on wrong space")

    return violations
