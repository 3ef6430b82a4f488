"""Shared builders and independent oracles used across the test suite.

The oracles deliberately use plain loops over the public scalar operations
(interval_contains / state_matches) so they stay independent of the
vectorized production paths they check.
"""

from __future__ import annotations

import math
from fractions import Fraction

from plantstate.core import (
    Interval,
    MachineStatus,
    ParameterDef,
    ProcessSnapshot,
    QualityConfig,
    State,
    interval_contains,
    state_matches,
)
from plantstate.ingest import TrainingSample, TrainingSet


def make_manifest(n_sensors=2, n_settings=1, observed=(0.0, 100.0)):
    params = []
    for i in range(n_sensors):
        params.append(ParameterDef(id=f"s{i + 1}", name=f"Sensor {i + 1}",
                                   kind="sensor", units="",
                                   observed_min=observed[0],
                                   observed_max=observed[1]))
    for i in range(n_settings):
        params.append(ParameterDef(id=f"h{i + 1}", name=f"Setting {i + 1}",
                                   kind="setting", units="",
                                   observed_min=observed[0],
                                   observed_max=observed[1]))
    return tuple(params)


def simple_quality_config(target_low=65.0, target_high=68.0):
    return QualityConfig(
        labels=("low", "target", "high"),
        target_label="target",
        bands={
            "low": Interval(-math.inf, target_low),
            "target": Interval(target_low, target_high),
            "high": Interval(target_high, math.inf),
        },
        aggregation="mean",
    )


def binary_quality_config():
    return QualityConfig(
        labels=("T", "N"),
        target_label="T",
        bands={"T": Interval(-math.inf, 0.0), "N": Interval(0.0, math.inf)},
        aggregation="mean",
    )


def training_set_from_arrays(x_status, x_new, labels, manifest,
                             quality_config, batch_ids=None):
    """Build a real TrainingSet from matrices (one snapshot per row)."""
    sensor_cols = [p.id for p in manifest if p.kind == "sensor"]
    setting_cols = [p.id for p in manifest if p.kind == "setting"]
    status_cols = [p.id for p in manifest]
    samples = []
    for i in range(len(labels)):
        obs = dict(zip(status_cols, map(float, x_status[i])))
        sensors = {k: obs[k] for k in sensor_cols}
        settings = {k: obs[k] for k in setting_cols}
        new = dict(zip(setting_cols, map(float, x_new[i])))
        batch = batch_ids[i] if batch_ids is not None else f"B{i}"
        samples.append(TrainingSample(
            t=i * 10_000,
            snapshot=ProcessSnapshot(
                status=MachineStatus(sensors=sensors, settings=settings),
                new_settings=new),
            run_batch_id=batch, label=str(labels[i]),
        ))
    per_run = {s.run_batch_id: s.label for s in samples}
    return TrainingSet(samples=tuple(samples), manifest=tuple(manifest),
                       quality_config=quality_config,
                       window=(0, max(1, (len(labels) - 1) * 10_000)),
                       per_run_label=per_run)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def brute_score(states, observations, labels, target_label):
    """Popularity/goodness by scanning every (state, sample) pair."""
    out = {}
    for state in states:
        matched = [i for i, obs in enumerate(observations)
                   if state_matches(state, obs)]
        popularity = len(matched)
        goodness = None
        if popularity:
            goodness = sum(1 for i in matched
                           if labels[i] == target_label) / popularity
        out[state.id] = (popularity, goodness)
    return out


def brute_predict(composites, states_by_id, status_obs, new_obs):
    """Linear scan over all composites; returns the chosen composite or None."""
    best = None
    for comp in composites:
        if not comp.supported:
            continue
        u = states_by_id[comp.status_state_id]
        w = states_by_id[comp.settings_state_id]
        if state_matches(u, status_obs) and state_matches(w, new_obs):
            key = (-comp.popularity, -comp.goodness, comp.id)
            if best is None or key < best[0]:
                best = (key, comp)
    return None if best is None else best[1]


def brute_recommend(composites, states_by_id, status_obs):
    best = None
    for comp in composites:
        if not comp.supported:
            continue
        u = states_by_id[comp.status_state_id]
        if state_matches(u, status_obs):
            key = (-comp.goodness, -comp.popularity, comp.id)
            if best is None or key < best[0]:
                best = (key, comp)
    return None if best is None else best[1]


def brute_best_split(X, y, param_ids, min_leaf):
    """Exact-fraction exhaustive split search, fully independent arithmetic."""
    n = len(y)
    labels = sorted(set(y))

    def gini_frac(subset):
        counts = [sum(1 for v in subset if v == lab) for lab in labels]
        total = len(subset)
        return Fraction(1) - sum(Fraction(c, total) ** 2 for c in counts)

    parent = gini_frac(y)
    best = None  # (decrease, j, threshold)
    for j, pid in enumerate(param_ids):
        col = [row[j] for row in X]
        for thr in sorted({(a + b) / 2 for a, b in
                           zip(sorted(set(col)), sorted(set(col))[1:])}):
            left = [y[i] for i in range(n) if col[i] <= thr]
            right = [y[i] for i in range(n) if col[i] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            decrease = parent - (Fraction(len(left), n) * gini_frac(left)
                                 + Fraction(len(right), n) * gini_frac(right))
            if decrease <= 0:
                continue
            if best is None or decrease > best[0]:
                best = (decrease, pid, thr)
    if best is None:
        return None
    return best[1], best[2], float(best[0])


def random_states(rng, space, param_ids, count, overlap=True):
    """Hand-made (possibly overlapping) states for matcher stress tests."""
    states = []
    for i in range(count):
        intervals = {}
        for pid in param_ids:
            if rng.random() < 0.4:
                intervals[pid] = Interval()
                continue
            lo = rng.uniform(0, 80)
            hi = lo + rng.uniform(1, 40)
            if rng.random() < 0.2:
                intervals[pid] = Interval(low=lo)
            elif rng.random() < 0.2:
                intervals[pid] = Interval(high=hi)
            else:
                intervals[pid] = Interval(low=lo, high=hi)
        states.append(State(id=f"{'u' if space == 'status' else 'w'}-R{i}",
                            space=space, intervals=intervals,
                            popularity=1, goodness=0.5))
    return states
