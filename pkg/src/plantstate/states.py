"""Rule extraction from fitted trees and conversion into scored states.

Each root-to-leaf path becomes a decision rule; folding its conditions
yields a hyperrectangle state over the tree's parameter space. States are
then scored by re-scanning the training data: popularity counts matching
snapshots, goodness is the fraction of those whose run hit the target
quality. Because sibling leaves split on (>, <=) boundaries, the states of
one tree partition the space: every observation matches exactly one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from plantstate.core import (
    Interval,
    ParameterDef,
    State,
    canonical_json,
    space_param_ids,
)
from plantstate.tree import DecisionTree, LeafNode, SplitNode

OP_GT = ">"
OP_LE = "<="


@dataclass(frozen=True)
class DecisionRule:
    """Conditions along one root-to-leaf path, in path order."""

    conditions: tuple[tuple[str, str, float], ...]
    leaf_id: str


@dataclass(frozen=True)
class ScoredStateSet:
    """All states of one tree with popularity and goodness filled in."""

    states: tuple[State, ...]
    space: str
    source_tree_fingerprint: str
    target_label: str


def tree_fingerprint(tree: DecisionTree) -> str:
    digest = hashlib.sha256(canonical_json(tree.to_dict()).encode("utf-8"))
    return "sha256:" + digest.hexdigest()


def extract_rules(tree: DecisionTree) -> list[DecisionRule]:
    """One rule per leaf, in left-to-right leaf order."""
    rules: list[DecisionRule] = []
    stack: list[tuple[object, tuple[tuple[str, str, float], ...]]] = [
        (tree.root, ())
    ]
    while stack:
        node, conditions = stack.pop()
        if isinstance(node, LeafNode):
            rules.append(DecisionRule(conditions=conditions, leaf_id=node.id))
            continue
        assert isinstance(node, SplitNode)
        stack.append((node.right,
                      conditions + ((node.parameter_id, OP_GT, node.threshold),)))
        stack.append((node.left,
                      conditions + ((node.parameter_id, OP_LE, node.threshold),)))
    return rules


_STATE_PREFIX = {"status": "u", "newSettings": "w"}


def state_id_for_leaf(space: str, leaf_id: str) -> str:
    return f"{_STATE_PREFIX[space]}-{leaf_id}"


def rules_to_states(rules: Sequence[DecisionRule],
                    manifest: Sequence[ParameterDef],
                    space: str) -> list[State]:
    """Fold each rule's conditions into per-parameter intervals.

    ``> v`` raises the lower bound, ``<= v`` lowers the upper bound;
    parameters untouched by the rule stay unconstrained.
    """
    param_ids = space_param_ids(manifest, space)
    states: list[State] = []
    for rule in rules:
        low = {pid: -math.inf for pid in param_ids}
        high = {pid: math.inf for pid in param_ids}
        for pid, op, value in rule.conditions:
            if pid not in low:
                raise ValueError(f"rule condition on unknown parameter: {pid}")
            if op == OP_GT:
                low[pid] = max(low[pid], value)
            elif op == OP_LE:
                high[pid] = min(high[pid], value)
            else:
                raise ValueError(f"unknown operator: {op}")
        intervals = {}
        for pid in param_ids:
            if not low[pid] < high[pid]:
                raise ValueError(
                    f"empty interval for {pid} in rule {rule.leaf_id}"
                )
            intervals[pid] = Interval(low=low[pid], high=high[pid])
        states.append(State(id=state_id_for_leaf(space, rule.leaf_id),
                            space=space, intervals=intervals))
    return states


def states_from_tree(tree: DecisionTree,
                     manifest: Sequence[ParameterDef]) -> list[State]:
    return rules_to_states(extract_rules(tree), manifest, tree.space)


# ---------------------------------------------------------------------------
# Vectorized matching
# ---------------------------------------------------------------------------

def interval_bounds(states: Sequence[State],
                    param_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """(lows, highs) matrices of shape (n_states, n_params)."""
    lows = np.full((len(states), len(param_ids)), -np.inf)
    highs = np.full((len(states), len(param_ids)), np.inf)
    for i, state in enumerate(states):
        for j, pid in enumerate(param_ids):
            iv = state.intervals.get(pid)
            if iv is not None:
                lows[i, j] = iv.low
                highs[i, j] = iv.high
    return lows, highs


def match_matrix(states: Sequence[State], X: np.ndarray,
                 param_ids: Sequence[str]) -> np.ndarray:
    """Boolean matrix: (row, state) -> state matches the row's observation."""
    lows, highs = interval_bounds(states, param_ids)
    n = len(X)
    out = np.empty((n, len(states)), dtype=bool)
    # Chunked to bound the broadcast temporaries on large sets.
    step = max(1, 2_000_000 // max(1, len(states) * len(param_ids)))
    for start in range(0, n, step):
        rows = X[start:start + step]
        ok = (rows[:, np.newaxis, :] > lows[np.newaxis, :, :]) \
            & (rows[:, np.newaxis, :] <= highs[np.newaxis, :, :])
        out[start:start + step] = ok.all(axis=2)
    return out


def space_matrix(samples, manifest: Sequence[ParameterDef],
                 space: str) -> np.ndarray:
    """Observation matrix for one space from training samples.

    Rows follow the sample order; columns follow the space's parameter ids.
    """
    param_ids = space_param_ids(manifest, space)
    X = np.empty((len(samples), len(param_ids)))
    for i, sample in enumerate(samples):
        if space == "status":
            obs = sample.snapshot.status.observation()
        else:
            obs = sample.snapshot.new_settings
        for j, pid in enumerate(param_ids):
            try:
                X[i, j] = obs[pid]
            except KeyError:
                raise ValueError(f"missing parameter: {pid}") from None
    if np.isnan(X).any():
        raise ValueError("non-finite observation")
    return X


def score_states(states: Sequence[State], training_set,
                 target_label: str) -> ScoredStateSet:
    """Popularity and goodness by re-scanning the training set.

    Scoring is independent of the leaf counts recorded during tree growth;
    the partition invariant (every sample matches exactly one state) is
    enforced here and cross-checks the two paths.
    """
    if not states:
        raise ValueError("no states to score")
    space = states[0].space
    X = space_matrix(training_set.samples, training_set.manifest, space)
    y = np.array([s.label for s in training_set.samples])
    return score_states_arrays(states, X, y,
                               space_param_ids(training_set.manifest, space),
                               target_label)


def score_states_arrays(states: Sequence[State], X: np.ndarray, y: np.ndarray,
                        param_ids: Sequence[str],
                        target_label: str) -> ScoredStateSet:
    matches = match_matrix(states, X, param_ids)
    per_sample = matches.sum(axis=1)
    if (per_sample == 0).any():
        i = int(np.argmax(per_sample == 0))
        raise ValueError(f"unmatched sample at row {i}")
    if (per_sample > 1).any():
        i = int(np.argmax(per_sample > 1))
        raise ValueError(f"sample at row {i} matches multiple states")

    is_target = y == target_label
    scored: list[State] = []
    for i, state in enumerate(states):
        hit = matches[:, i]
        popularity = int(hit.sum())
        goodness: Optional[float] = None
        if popularity > 0:
            goodness = int((hit & is_target).sum()) / popularity
        scored.append(State(id=state.id, space=state.space,
                            intervals=state.intervals,
                            popularity=popularity, goodness=goodness))
    return ScoredStateSet(states=tuple(scored), space=states[0].space,
                          source_tree_fingerprint="", target_label=target_label)


def scored_set_for_tree(tree: DecisionTree, training_set,
                        target_label: str) -> ScoredStateSet:
    """Extract, fold and score the states of one fitted tree."""
    states = states_from_tree(tree, training_set.manifest)
    scored = score_states(states, training_set, target_label)
    return ScoredStateSet(states=scored.states, space=scored.space,
                          source_tree_fingerprint=tree_fingerprint(tree),
                          target_label=target_label)


def scored_set_for_tree_arrays(tree: DecisionTree,
                               manifest: Sequence[ParameterDef],
                               X: np.ndarray, y: np.ndarray,
                               target_label: str) -> ScoredStateSet:
    """Array-backed variant of ``scored_set_for_tree`` (same semantics)."""
    states = states_from_tree(tree, manifest)
    scored = score_states_arrays(states, X, np.asarray(y),
                                 space_param_ids(manifest, tree.space),
                                 target_label)
    return ScoredStateSet(states=scored.states, space=scored.space,
                          source_tree_fingerprint=tree_fingerprint(tree),
                          target_label=target_label)


# ---------------------------------------------------------------------------
# Tabular export
# ---------------------------------------------------------------------------

def states_table(states: Sequence[State],
                 manifest: Sequence[ParameterDef]) -> tuple[list[str], list[list[str]]]:
    """Header and rows for the states CSV: one column per parameter that is
    finitely bounded in any state, rendered "low-high", plus scores."""
    if not states:
        return ["state"], []
    space = states[0].space
    param_ids = space_param_ids(manifest, space)
    bounded = [pid for pid in param_ids
               if any(not s.intervals[pid].unbounded for s in states
                      if pid in s.intervals)]
    names = {p.id: p.name for p in manifest}

    def fmt(v: float) -> str:
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return f"{v:g}"

    header = ["state"] + [names[pid] for pid in bounded] + ["popularity", "goodness"]
    rows = []
    for s in states:
        cells = [s.id]
        for pid in bounded:
            iv = s.intervals.get(pid)
            cells.append("" if iv is None or iv.unbounded
                         else f"{fmt(iv.low)}-{fmt(iv.high)}")
        cells.append(str(s.popularity))
        cells.append("" if s.goodness is None else repr(s.goodness))
        rows.append(cells)
    return header, rows
