"""Composite sensor-setting states, real-time prediction, recommendation.

A composite pairs one status state with one settings state and is scored
jointly over the training snapshots. Prediction matches a full process
snapshot against the supported composites and reports the goodness of the
most popular match; recommendation matches on machine status alone and
returns the settings component of the best-goodness match.

``CompositeMatcher`` precomputes interval matrices per space plus a
(status, settings) pair index, so scoring one tick is two small
vectorized matches and a dictionary lookup; the result is identical to a
linear scan over all composites (asserted by tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from plantstate.core import (
    CompositeState,
    Interval,
    MachineStatus,
    MissingParameterError,
    ModelBundle,
    ParameterDef,
    ProcessSnapshot,
    State,
    VERDICT_OFF_TARGET,
    VERDICT_TARGET,
    VERDICT_UNKNOWN,
    setting_ids,
    status_param_ids,
)
from plantstate.states import interval_bounds, match_matrix

DEFAULT_DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class Prediction:
    """Quality outlook for one process snapshot."""

    verdict: str
    likelihood: Optional[float]
    composite_id: Optional[str]
    popularity: Optional[int]
    matched_count: int

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "likelihood": self.likelihood,
            "compositeId": self.composite_id,
            "popularity": self.popularity,
            "matchedCount": self.matched_count,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "Prediction":
        return Prediction(
            verdict=d["verdict"], likelihood=d.get("likelihood"),
            composite_id=d.get("compositeId"), popularity=d.get("popularity"),
            matched_count=d.get("matchedCount", 0),
        )


@dataclass(frozen=True)
class Recommendation:
    """Settings ranges (and point values) most likely to reach target."""

    composite_id: str
    settings_intervals: Mapping[str, Interval]
    point_settings: Mapping[str, float]
    expected_goodness: float
    support: int

    def to_dict(self) -> dict:
        return {
            "compositeId": self.composite_id,
            "settingsIntervals": {k: v.to_dict()
                                  for k, v in self.settings_intervals.items()},
            "pointSettings": dict(self.point_settings),
            "expectedGoodness": self.expected_goodness,
            "support": self.support,
        }


def composite_id_for(status_state_id: str, settings_state_id: str) -> str:
    return f"{status_state_id}|{settings_state_id}"


def build_composites(status_states: Sequence[State],
                     settings_states: Sequence[State],
                     training_set) -> list[CompositeState]:
    """All status x settings pairs, scored jointly over the training set.

    Pairs that never co-occur keep popularity 0 and goodness None; they are
    retained but unmatchable.
    """
    from plantstate.states import space_matrix

    manifest = training_set.manifest
    x_status = space_matrix(training_set.samples, manifest, "status")
    x_new = space_matrix(training_set.samples, manifest, "newSettings")
    y = np.array([s.label for s in training_set.samples])
    target = training_set.quality_config.target_label
    return build_composites_arrays(
        status_states, settings_states,
        x_status, status_param_ids(manifest),
        x_new, setting_ids(manifest),
        y == target,
    )


def build_composites_arrays(status_states: Sequence[State],
                            settings_states: Sequence[State],
                            x_status: np.ndarray, status_ids: Sequence[str],
                            x_new: np.ndarray, new_ids: Sequence[str],
                            is_target: np.ndarray) -> list[CompositeState]:
    u_match = match_matrix(status_states, x_status, status_ids)
    w_match = match_matrix(settings_states, x_new, new_ids)
    for name, m in (("status", u_match), ("settings", w_match)):
        per_sample = m.sum(axis=1)
        if (per_sample != 1).any():
            i = int(np.argmax(per_sample != 1))
            raise ValueError(
                f"{name} states do not partition the snapshots (row {i})"
            )
    u_idx = np.argmax(u_match, axis=1)
    w_idx = np.argmax(w_match, axis=1)

    n_w = len(settings_states)
    joint = u_idx * n_w + w_idx
    counts = np.bincount(joint, minlength=len(status_states) * n_w)
    target_counts = np.bincount(joint[is_target],
                                minlength=len(status_states) * n_w)

    composites: list[CompositeState] = []
    for i, u in enumerate(status_states):
        for j, w in enumerate(settings_states):
            popularity = int(counts[i * n_w + j])
            goodness = None
            if popularity > 0:
                goodness = int(target_counts[i * n_w + j]) / popularity
            composites.append(CompositeState(
                id=composite_id_for(u.id, w.id),
                status_state_id=u.id, settings_state_id=w.id,
                popularity=popularity, goodness=goodness,
            ))
    return composites


class CompositeMatcher:
    """Read-only matching index over one bundle's states and composites.

    Immutable after construction; safe for concurrent readers.
    """

    def __init__(self, status_states: Sequence[State],
                 settings_states: Sequence[State],
                 composites: Sequence[CompositeState],
                 manifest: Sequence[ParameterDef]):
        self.status_states = tuple(status_states)
        self.settings_states = tuple(settings_states)
        self.composites = tuple(composites)
        self.manifest = tuple(manifest)
        self.status_ids = status_param_ids(manifest)
        self.new_ids = setting_ids(manifest)
        self._u_lows, self._u_highs = interval_bounds(status_states,
                                                      self.status_ids)
        self._w_lows, self._w_highs = interval_bounds(settings_states,
                                                      self.new_ids)
        self._pair: dict[tuple[int, int], CompositeState] = {}
        self._by_u: dict[int, list[CompositeState]] = {}
        u_pos = {s.id: i for i, s in enumerate(self.status_states)}
        w_pos = {s.id: i for i, s in enumerate(self.settings_states)}
        for comp in composites:
            key = (u_pos[comp.status_state_id], w_pos[comp.settings_state_id])
            self._pair[key] = comp
            if comp.supported:
                self._by_u.setdefault(key[0], []).append(comp)
        self._w_by_id = {s.id: s for s in self.settings_states}
        self._observed = {p.id: (p.observed_min, p.observed_max)
                          for p in manifest}

    @staticmethod
    def from_bundle(bundle: ModelBundle) -> "CompositeMatcher":
        return CompositeMatcher(bundle.status_states, bundle.settings_states,
                                bundle.composites, bundle.manifest)

    # -- vector extraction ---------------------------------------------------

    def _vector(self, obs: Mapping[str, float], param_ids: Sequence[str],
                lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
        x = np.empty(len(param_ids))
        for j, pid in enumerate(param_ids):
            v = obs.get(pid)
            if v is None:
                # Absent parameters are fine only if no state bounds them.
                if np.isinf(lows[:, j]).all() and np.isinf(highs[:, j]).all():
                    x[j] = 0.0
                    continue
                raise MissingParameterError(f"missing parameter: {pid}")
            if math.isnan(v):
                raise ValueError("non-finite observation")
            x[j] = v
        return x

    def _matched(self, x: np.ndarray, lows: np.ndarray,
                 highs: np.ndarray) -> np.ndarray:
        return np.nonzero(((x > lows) & (x <= highs)).all(axis=1))[0]

    def matched_status_indices(self, status_obs: Mapping[str, float]) -> np.ndarray:
        x = self._vector(status_obs, self.status_ids, self._u_lows, self._u_highs)
        return self._matched(x, self._u_lows, self._u_highs)

    def matched_settings_indices(self, new_obs: Mapping[str, float]) -> np.ndarray:
        x = self._vector(new_obs, self.new_ids, self._w_lows, self._w_highs)
        return self._matched(x, self._w_lows, self._w_highs)

    # -- prediction ----------------------------------------------------------

    def predict_quality(self, snapshot: ProcessSnapshot,
                        decision_threshold: float = DEFAULT_DECISION_THRESHOLD
                        ) -> Prediction:
        """Most popular supported composite matching the process snapshot."""
        u_hits = self.matched_status_indices(snapshot.status.observation())
        w_hits = self.matched_settings_indices(snapshot.new_settings)
        candidates = [
            comp
            for ui in u_hits for wj in w_hits
            if (comp := self._pair.get((int(ui), int(wj)))) is not None
            and comp.supported
        ]
        if not candidates:
            return Prediction(verdict=VERDICT_UNKNOWN, likelihood=None,
                              composite_id=None, popularity=None,
                              matched_count=0)
        best = min(candidates,
                   key=lambda c: (-c.popularity, -c.goodness, c.id))
        verdict = VERDICT_TARGET if best.goodness >= decision_threshold \
            else VERDICT_OFF_TARGET
        return Prediction(verdict=verdict, likelihood=best.goodness,
                          composite_id=best.id, popularity=best.popularity,
                          matched_count=len(candidates))

    # -- recommendation ------------------------------------------------------

    def recommend_settings(self, status: MachineStatus,
                           observed_ranges: Optional[Mapping[str, tuple]] = None
                           ) -> Recommendation:
        """Best-goodness supported composite matching the status alone."""
        u_hits = self.matched_status_indices(status.observation())
        candidates = [comp for ui in u_hits for comp in self._by_u.get(int(ui), [])]
        if not candidates:
            raise ValueError("no matching status state")
        best = min(candidates,
                   key=lambda c: (-c.goodness, -c.popularity, c.id))
        w = self._w_by_id[best.settings_state_id]
        ranges = observed_ranges if observed_ranges is not None else self._observed
        points = {pid: _point_in_interval(iv, ranges.get(pid))
                  for pid, iv in w.intervals.items()}
        return Recommendation(
            composite_id=best.id,
            settings_intervals=dict(w.intervals),
            point_settings=points,
            expected_goodness=best.goodness,
            support=best.popularity,
        )


def _point_in_interval(iv: Interval, observed: Optional[tuple]) -> float:
    """Interval midpoint; infinite bounds are clamped to the observed range."""
    omin, omax = (None, None) if observed is None else observed
    lo, hi = iv.low, iv.high
    if math.isinf(lo):
        lo = omin if omin is not None else (hi - 1.0 if not math.isinf(hi) else 0.0)
    if math.isinf(hi):
        hi = omax if omax is not None else lo + 1.0
    point = lo + (hi - lo) / 2.0
    if not iv.low < point <= iv.high:
        # Degenerate observed ranges can push the midpoint outside; fall
        # back to a value certainly inside the half-open interval.
        point = iv.high if not math.isinf(iv.high) \
            else float(np.nextafter(iv.low, math.inf))
    return float(point)


# Functional forms mirroring the matcher, for callers holding a bundle.

def predict_quality(model, snapshot: ProcessSnapshot,
                    decision_threshold: float = DEFAULT_DECISION_THRESHOLD
                    ) -> Prediction:
    return _as_matcher(model).predict_quality(snapshot, decision_threshold)


def recommend_settings(model, status: MachineStatus,
                       observed_ranges: Optional[Mapping[str, tuple]] = None
                       ) -> Recommendation:
    return _as_matcher(model).recommend_settings(status, observed_ranges)


def _as_matcher(model) -> CompositeMatcher:
    if isinstance(model, CompositeMatcher):
        return model
    if isinstance(model, ModelBundle):
        return CompositeMatcher.from_bundle(model)
    raise TypeError(f"expected a bundle or matcher, got {type(model)!r}")
