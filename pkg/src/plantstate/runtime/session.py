"""Live production-run sessions: replay or synthetic, tick by tick.

One writer per session (the tick loop); operator actions are enqueued and
take effect at the next tick boundary, never mid-tick. Every tick is scored
through the immutable bundle, appended to the session log and fanned out to
subscribers. A session log replayed against the same bundle reproduces
every prediction bit-exactly (matching is deterministic and pure).
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from plantstate.analytics import (
    CompositeMatcher,
    DEFAULT_DECISION_THRESHOLD,
    Prediction,
    Recommendation,
)
from plantstate.core import (
    MachineStatus,
    ModelBundle,
    ProcessSnapshot,
    QualityConfig,
    canonical_json,
    sensor_ids,
    setting_ids,
)

MODE_REPLAY = "replay"
MODE_SYNTHETIC = "synthetic"

# Fixed logical start so seeded sessions serialize identically everywhere.
DEFAULT_START_MS = 1_767_225_600_000  # 2026-01-01T00:00:00Z


class SessionClosedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to start a session against a loaded bundle."""

    mode: str
    tick_interval_ms: int = 10_000
    speed_factor: float = 1.0
    seed: int = 0
    start_ms: int = DEFAULT_START_MS
    plant: Optional["PlantSpec"] = None          # synthetic mode
    replay_log_path: Optional[str] = None        # replay mode
    batch_id: str = "live"
    material_type: Optional[str] = None
    decision_threshold: float = DEFAULT_DECISION_THRESHOLD
    recommend_each_tick: bool = False
    max_ticks: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode not in (MODE_REPLAY, MODE_SYNTHETIC):
            raise ValueError(f"unknown session mode: {self.mode!r}")
        if self.tick_interval_ms <= 0:
            raise ValueError("tick interval must be positive")
        has_plant = self.plant is not None
        has_replay = self.replay_log_path is not None
        if self.mode == MODE_SYNTHETIC and (not has_plant or has_replay):
            raise ValueError("synthetic mode needs a plant spec and no replay source")
        if self.mode == MODE_REPLAY and (not has_replay or has_plant):
            raise ValueError("replay mode needs a replay source and no plant spec")


@dataclass(frozen=True)
class TickEvent:
    """One scored instant of a live session."""

    index: int
    t: int
    snapshot: ProcessSnapshot
    prediction: Prediction
    recommendation: Optional[Recommendation] = None
    pending_settings: Mapping[str, float] = field(default_factory=dict)
    running_label: Optional[str] = None
    what_if: Optional[Prediction] = None
    what_if_settings: Optional[Mapping[str, float]] = None

    def to_dict(self) -> dict:
        return {
            "type": "tick",
            "index": self.index,
            "t": self.t,
            "snapshot": {
                "sensors": dict(self.snapshot.status.sensors),
                "settings": dict(self.snapshot.status.settings),
                "newSettings": dict(self.snapshot.new_settings),
            },
            "prediction": self.prediction.to_dict(),
            "recommendation": None if self.recommendation is None
            else self.recommendation.to_dict(),
            "pendingSettings": dict(self.pending_settings),
            "runningLabel": self.running_label,
            "whatIf": None if self.what_if is None else self.what_if.to_dict(),
            "whatIfSettings": None if self.what_if_settings is None
            else dict(self.what_if_settings),
        }


class SessionLog:
    """Append-only JSON-lines log; canonical serialization per line."""

    def __init__(self):
        self.entries: list[dict] = []

    def append(self, entry: dict) -> None:
        self.entries.append(entry)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(canonical_json(entry) + "\n")

    @staticmethod
    def load(path) -> "SessionLog":
        log = SessionLog()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    log.append(json.loads(line))
        return log

    def ticks(self) -> list[dict]:
        return [e for e in self.entries if e.get("type") == "tick"]


def whatif(model, status: MachineStatus, candidate_settings: Mapping[str, float],
           decision_threshold: float = DEFAULT_DECISION_THRESHOLD) -> Prediction:
    """Prediction for a hypothetical settings action; pure, no session state."""
    from plantstate.analytics import predict_quality

    snap = ProcessSnapshot(status=status, new_settings=dict(candidate_settings))
    return predict_quality(model, snap, decision_threshold)


def _aggregate_running_label(measurements: Sequence[float],
                             quality_config: QualityConfig) -> Optional[str]:
    if not measurements:
        return None
    mode = quality_config.aggregation
    if mode == "lastSample":
        return quality_config.band_for(measurements[-1])
    if mode == "majorityInBand":
        band = quality_config.bands[quality_config.target_label]
        in_band = sum(1 for m in measurements if band.low < m <= band.high)
        if in_band / len(measurements) >= quality_config.in_band_threshold:
            return quality_config.target_label
    return quality_config.band_for(sum(measurements) / len(measurements))


class Session:
    """A live session over an immutable bundle.

    ``step`` is the only mutator and must be driven by a single caller
    (the tick loop); operator-facing methods enqueue work or read state
    under the session lock.
    """

    def __init__(self, config: SessionConfig, bundle: ModelBundle):
        from plantstate.runtime.plant import SyntheticPlant

        self.config = config
        self.bundle = bundle
        self.matcher = CompositeMatcher.from_bundle(bundle)
        self.log = SessionLog()
        self.closed = False
        self._lock = threading.Lock()
        self._actions: queue.Queue = queue.Queue()
        self._subscribers: list[queue.Queue] = []
        self._latest: Optional[TickEvent] = None
        self._tick_index = 0
        self._measurements: list[float] = []
        self._running_label: Optional[str] = None
        self._what_if_settings: Optional[dict[str, float]] = None

        self._sensor_ids = sensor_ids(bundle.manifest)
        self._setting_ids = setting_ids(bundle.manifest)

        if config.mode == MODE_SYNTHETIC:
            spec = config.plant
            if list(spec.sensor_ids) != self._sensor_ids or \
                    list(spec.setting_ids) != self._setting_ids:
                raise ValueError("bundle/parameter mismatch")
            self._plant = SyntheticPlant(spec, seed=config.seed)
            self._sensors = dict(spec.initial_sensors)
            self._applied = dict(spec.initial_settings)
            self._new = dict(spec.initial_settings)
            self._replay_ticks = None
        else:
            self._plant = None
            self._replay_ticks = SessionLog.load(config.replay_log_path).ticks()
            if not self._replay_ticks:
                raise ValueError("replay source has no ticks")
            first = self._replay_ticks[0]["snapshot"]
            if sorted(first["sensors"]) != sorted(self._sensor_ids) or \
                    sorted(first["settings"]) != sorted(self._setting_ids):
                raise ValueError("bundle/parameter mismatch")

        self.log.append({
            "type": "session",
            "mode": config.mode,
            "seed": config.seed,
            "tickIntervalMs": config.tick_interval_ms,
            "startMs": config.start_ms,
            "batchId": config.batch_id,
            "materialType": config.material_type,
            "decisionThreshold": config.decision_threshold,
            "bundleFingerprint": bundle.dataset_fingerprint,
            "plant": None if config.plant is None else config.plant.to_dict(),
            "replaySource": config.replay_log_path,
        })

    # -- operator actions ----------------------------------------------------

    def apply_settings(self, values: Mapping[str, float]) -> dict:
        """Queue new setting values; they land in newSettings at the next tick.

        In replay mode the recorded data stays untouched: the values become a
        what-if overlay carried by subsequent ticks instead.
        """
        with self._lock:
            if self.closed:
                raise SessionClosedError("session closed")
            unknown = [k for k in values if k not in self._setting_ids]
            if unknown:
                raise ValueError(f"unknown setting: {unknown[0]}")
            payload = {k: float(v) for k, v in values.items()}
            self._actions.put(("settings", payload))
            self.log.append({"type": "action", "atTick": self._tick_index,
                             "values": payload,
                             "overlay": self.config.mode == MODE_REPLAY})
            return {"accepted": payload, "mode": self.config.mode}

    def record_quality_sample(self, measurement: float) -> Optional[str]:
        """Append an offline quality measurement; returns the running label."""
        with self._lock:
            if self.closed:
                raise SessionClosedError("session closed")
            self._actions.put(("quality", float(measurement)))
            self.log.append({"type": "quality", "atTick": self._tick_index,
                             "measurement": float(measurement)})
            pending = self._measurements + [float(measurement)]
            return _aggregate_running_label(pending,
                                            self.bundle.quality_config)

    def whatif(self, candidate_settings: Mapping[str, float]) -> Prediction:
        latest = self._latest
        if latest is None:
            raise ValueError("no tick yet")
        return whatif(self.matcher, latest.snapshot.status, candidate_settings,
                      self.config.decision_threshold)

    def recommendation(self) -> Recommendation:
        latest = self._latest
        if latest is None:
            raise ValueError("no tick yet")
        return self.matcher.recommend_settings(latest.snapshot.status)

    # -- tick loop -----------------------------------------------------------

    def _drain_actions(self) -> tuple[dict[str, float], list[float]]:
        settings: dict[str, float] = {}
        samples: list[float] = []
        while True:
            try:
                kind, payload = self._actions.get_nowait()
            except queue.Empty:
                break
            if kind == "settings":
                settings.update(payload)
            else:
                samples.append(payload)
        return settings, samples

    def step(self) -> Optional[TickEvent]:
        """Advance one tick; returns None when the session is exhausted."""
        with self._lock:
            if self.closed:
                raise SessionClosedError("session closed")
            if self.config.max_ticks is not None \
                    and self._tick_index >= self.config.max_ticks:
                return None

            new_settings_action, samples = self._drain_actions()
            for m in samples:
                self._measurements.append(m)
            if self._measurements:
                self._running_label = _aggregate_running_label(
                    self._measurements, self.bundle.quality_config)

            if self.config.mode == MODE_SYNTHETIC:
                event = self._step_synthetic(new_settings_action)
            else:
                event = self._step_replay(new_settings_action)
            if event is None:
                return None
            self._latest = event
            self._tick_index += 1
            self.log.append(event.to_dict())
        for q in list(self._subscribers):
            q.put(event)
        return event

    def _step_synthetic(self, action: dict[str, float]) -> TickEvent:
        k = self._tick_index
        if k > 0:
            # Applied settings follow the previous tick's new settings.
            self._applied = dict(self._new)
            self._sensors = self._plant.step(k)
        if action:
            for sid, value in action.items():
                lag = self._plant.spec.lag_ticks.get(sid, 0)
                self._plant.schedule(k + lag, sid, value)
            self._new = {**self._applied, **action}
        else:
            self._new = dict(self._applied)

        snapshot = ProcessSnapshot(
            status=MachineStatus(sensors=dict(self._sensors),
                                 settings=dict(self._applied)),
            new_settings=dict(self._new),
        )
        return self._scored_event(k, snapshot,
                                  pending=self._plant.pending_after(k))

    def _step_replay(self, action: dict[str, float]) -> Optional[TickEvent]:
        k = self._tick_index
        if k >= len(self._replay_ticks):
            return None
        recorded = self._replay_ticks[k]["snapshot"]
        snapshot = ProcessSnapshot(
            status=MachineStatus(sensors=dict(recorded["sensors"]),
                                 settings=dict(recorded["settings"])),
            new_settings=dict(recorded["newSettings"]),
        )
        if action:
            base = self._what_if_settings or dict(snapshot.new_settings)
            self._what_if_settings = {**base, **action}
        what_if_pred = None
        if self._what_if_settings is not None:
            what_if_pred = whatif(self.matcher, snapshot.status,
                                  self._what_if_settings,
                                  self.config.decision_threshold)
        return self._scored_event(k, snapshot, pending={},
                                  what_if=what_if_pred,
                                  what_if_settings=self._what_if_settings)

    def _scored_event(self, k: int, snapshot: ProcessSnapshot,
                      pending: Mapping[str, float],
                      what_if: Optional[Prediction] = None,
                      what_if_settings: Optional[Mapping[str, float]] = None
                      ) -> TickEvent:
        prediction = self.matcher.predict_quality(
            snapshot, self.config.decision_threshold)
        recommendation = None
        if self.config.recommend_each_tick:
            try:
                recommendation = self.matcher.recommend_settings(snapshot.status)
            except ValueError:
                recommendation = None  # out of regime; endpoint reports it
        return TickEvent(
            index=k,
            t=self.config.start_ms + k * self.config.tick_interval_ms,
            snapshot=snapshot,
            prediction=prediction,
            recommendation=recommendation,
            pending_settings=dict(pending),
            running_label=self._running_label,
            what_if=what_if,
            what_if_settings=what_if_settings,
        )

    # -- lifecycle -----------------------------------------------------------

    @property
    def latest_event(self) -> Optional[TickEvent]:
        return self._latest

    @property
    def tick_count(self) -> int:
        return self._tick_index

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        if q in self._subscribers:
            self._subscribers.remove(q)

    def close(self) -> dict:
        with self._lock:
            if self.closed:
                raise SessionClosedError("session closed")
            self.closed = True
            final_label = self._running_label
            self.log.append({"type": "close", "atTick": self._tick_index,
                             "finalLabel": final_label,
                             "qualitySampleCount": len(self._measurements)})
        for q in list(self._subscribers):
            q.put(None)
        return {"ticks": self._tick_index, "finalLabel": final_label}


def tick_delay_seconds(tick_interval_ms: int, speed_factor: float) -> float:
    """Wall-clock pacing between ticks; speed_factor > 1 replays faster."""
    if speed_factor <= 0:
        raise ValueError("speed factor must be positive")
    return tick_interval_ms / 1000.0 / speed_factor


def run_session(session: Session,
                on_event: Optional[Callable[[TickEvent], None]] = None,
                pace: bool = False) -> int:
    """Drive a session to exhaustion; returns the number of ticks emitted.

    With ``pace`` the loop sleeps ``tick_delay_seconds`` between ticks
    (serve mode); without it the session runs as fast as possible
    (simulate mode).
    """
    delay = tick_delay_seconds(session.config.tick_interval_ms,
                               session.config.speed_factor)
    ticks = 0
    while True:
        event = session.step()
        if event is None:
            break
        ticks += 1
        if on_event is not None:
            on_event(event)
        if pace:
            time.sleep(delay)
    return ticks


class SessionRunner:
    """Thread driving a session's tick loop at wall-clock pace."""

    def __init__(self, session: Session):
        self.session = session
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)

    def start(self) -> None:
        self._thread.start()

    def _loop(self) -> None:
        delay = tick_delay_seconds(self.session.config.tick_interval_ms,
                                   self.session.config.speed_factor)
        while not self._stop.is_set():
            try:
                event = self.session.step()
            except SessionClosedError:
                break
            if event is None:
                break
            self._stop.wait(delay)

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5.0)


def replay_mismatches(log: SessionLog, bundle: ModelBundle) -> list[int]:
    """Recompute every logged tick's prediction; returns mismatching indices.

    An empty list certifies replay fidelity: the log's predictions are
    bit-identical to fresh ones from the same bundle.
    """
    matcher = CompositeMatcher.from_bundle(bundle)
    threshold = DEFAULT_DECISION_THRESHOLD
    for entry in log.entries:
        if entry.get("type") == "session":
            threshold = entry.get("decisionThreshold", threshold)
    bad = []
    for entry in log.ticks():
        snap = entry["snapshot"]
        snapshot = ProcessSnapshot(
            status=MachineStatus(sensors=snap["sensors"],
                                 settings=snap["settings"]),
            new_settings=snap["newSettings"],
        )
        fresh = matcher.predict_quality(snapshot, threshold)
        if canonical_json(fresh.to_dict()) != canonical_json(entry["prediction"]):
            bad.append(entry["index"])
    return bad
