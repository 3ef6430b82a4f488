"""Binary decision-tree classifier grown from scratch.

The tree maps observation vectors to quality labels. Growth is greedy:
exhaustive search over every parameter and every midpoint between
consecutive distinct sorted values, maximizing weighted Gini decrease,
with both children required to hold at least ``min_leaf_size`` samples.
There is no depth limit and no pruning; leaf granularity is controlled
solely by ``min_leaf_size``.

Split scoring is exact. With per-child label counts l_k, r_k, totals
n_k = l_k + r_k and sizes nl + nr = n, the weighted Gini decrease equals

    A / (n^2 * nl * nr),   A = n*nr*sum(l_k^2) + n*nl*sum(r_k^2) - nl*nr*sum(n_k^2)

where A is an integer. The sign test (A > 0) and tie comparisons are
therefore free of floating-point noise: candidates are ranked by
A / (nl * nr), which shares the constant n^2 factor within a node, and
ties fall back to parameter order, then the smaller threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

# n**4 must stay below 2**63 for exact int64 arithmetic.
_INT64_SAFE_N = 46_000


@dataclass(frozen=True)
class LeafNode:
    """Terminal node: the training label counts that reached it."""

    id: str
    label_counts: Mapping[str, int]
    predicted_label: str

    @property
    def total(self) -> int:
        return sum(self.label_counts.values())

    def to_dict(self) -> dict:
        return {
            "kind": "leaf",
            "id": self.id,
            "labelCounts": dict(self.label_counts),
            "predictedLabel": self.predicted_label,
        }


@dataclass(frozen=True)
class SplitNode:
    """Internal node: observations route left when value <= threshold."""

    parameter_id: str
    threshold: float
    left: "TreeNode"
    right: "TreeNode"

    def to_dict(self) -> dict:
        return {
            "kind": "split",
            "parameterId": self.parameter_id,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


TreeNode = Union[LeafNode, SplitNode]


def _node_from_dict(d: Mapping) -> TreeNode:
    if d["kind"] == "leaf":
        return LeafNode(
            id=d["id"],
            label_counts={k: int(v) for k, v in d["labelCounts"].items()},
            predicted_label=d["predictedLabel"],
        )
    return SplitNode(
        parameter_id=d["parameterId"],
        threshold=d["threshold"],
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
    )


@dataclass(frozen=True)
class DecisionTree:
    """A fitted tree over one parameter space."""

    root: TreeNode
    space: str
    min_leaf_size: int
    training_sample_count: int
    param_ids: tuple[str, ...]
    labels: tuple[str, ...]

    def leaves(self) -> list[LeafNode]:
        """Leaves in left-to-right order."""
        out: list[LeafNode] = []
        stack: list[TreeNode] = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, LeafNode):
                out.append(node)
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    @property
    def leaf_count(self) -> int:
        return len(self.leaves())

    def to_dict(self) -> dict:
        return {
            "space": self.space,
            "minLeafSize": self.min_leaf_size,
            "trainingSampleCount": self.training_sample_count,
            "paramIds": list(self.param_ids),
            "labels": list(self.labels),
            "root": self.root.to_dict(),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "DecisionTree":
        return DecisionTree(
            root=_node_from_dict(d["root"]),
            space=d["space"],
            min_leaf_size=d["minLeafSize"],
            training_sample_count=d["trainingSampleCount"],
            param_ids=tuple(d["paramIds"]),
            labels=tuple(d["labels"]),
        )


@dataclass(frozen=True)
class Split:
    """Best split found for one node."""

    parameter_id: str
    threshold: float
    impurity_decrease: float


def gini(label_counts: Mapping[str, int]) -> float:
    """Gini impurity 1 - sum((n_k / n)^2)."""
    total = sum(label_counts.values())
    if total <= 0:
        raise ValueError("empty node")
    return 1.0 - sum((c / total) ** 2 for c in label_counts.values())


def _encode_labels(y: Sequence, label_order: Sequence[str]) -> np.ndarray:
    index = {label: i for i, label in enumerate(label_order)}
    try:
        return np.fromiter((index[v] for v in y), dtype=np.int64, count=len(y))
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in label order") from exc


def _midpoint(lo: float, hi: float) -> float:
    mid = lo + (hi - lo) / 2.0
    # Adjacent representable values can collapse the midpoint onto hi,
    # which would flip the partition; pin to lo (<= lo still routes left).
    if not lo < mid < hi:
        mid = lo
    return mid


def _candidate_arrays(col: np.ndarray, codes: np.ndarray, n_labels: int,
                      min_leaf: int, exact: bool):
    """Per-boundary split statistics for one parameter, thresholds ascending."""
    order = np.argsort(col, kind="stable")
    sv = col[order]
    sy = codes[order]
    n = len(sv)

    boundaries = np.nonzero(sv[:-1] != sv[1:])[0]
    if len(boundaries) == 0:
        return None
    nl = boundaries + 1
    legal = (nl >= min_leaf) & (n - nl >= min_leaf)
    boundaries = boundaries[legal]
    if len(boundaries) == 0:
        return None
    nl = nl[legal]
    nr = n - nl

    onehot = np.zeros((n, n_labels), dtype=np.int64)
    onehot[np.arange(n), sy] = 1
    cum = np.cumsum(onehot, axis=0)
    totals = cum[-1]

    if not exact:
        # Fall back to Python integers to keep the arithmetic exact.
        nl = nl.astype(object)
        nr = nr.astype(object)
        cum = cum.astype(object)
        totals = totals.astype(object)

    left = cum[boundaries]
    right = totals[np.newaxis, :] - left
    sum_l2 = (left * left).sum(axis=1)
    sum_r2 = (right * right).sum(axis=1)
    sum_t2 = (totals * totals).sum()

    gain_num = n * nr * sum_l2 + n * nl * sum_r2 - nl * nr * sum_t2
    return sv, boundaries, nl, nr, gain_num


def _best_split_codes(X: np.ndarray, codes: np.ndarray,
                      param_ids: Sequence[str], min_leaf_size: int,
                      n_labels: int) -> Optional[Split]:
    n = len(codes)
    exact = n <= _INT64_SAFE_N
    best_rank = None
    best = None
    for j in range(len(param_ids)):
        stats = _candidate_arrays(X[:, j], codes, n_labels, min_leaf_size, exact)
        if stats is None:
            continue
        sv, boundaries, nl, nr, gain_num = stats
        positive = gain_num > 0
        if not positive.any():
            continue
        # Shared n^2 factor dropped: ranking within the node is unchanged.
        rank = np.where(positive,
                        gain_num.astype(np.float64) / (nl * nr).astype(np.float64),
                        -np.inf)
        k = int(np.argmax(rank))  # first max = smallest threshold
        if best_rank is None or rank[k] > best_rank:
            best_rank = rank[k]
            i = boundaries[k]
            best = (j, _midpoint(float(sv[i]), float(sv[i + 1])),
                    gain_num[k], nl[k], nr[k])
    if best is None:
        return None
    j, threshold, gain_num_best, nl_best, nr_best = best
    decrease = float(gain_num_best) / (float(n) ** 2 * float(nl_best) * float(nr_best))
    return Split(parameter_id=param_ids[j], threshold=threshold,
                 impurity_decrease=decrease)


def best_split(X, y: Sequence, param_ids: Sequence[str], min_leaf_size: int,
               label_order: Optional[Sequence[str]] = None) -> Optional[Split]:
    """Exhaustive best split, or None when no legal split improves purity.

    Ties are broken by parameter position in ``param_ids`` and then by the
    smaller threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if len(X) == 0:
        raise ValueError("empty training set")
    if label_order is None:
        label_order = sorted(set(y))
    codes = _encode_labels(y, label_order)
    return _best_split_codes(X, codes, list(param_ids), min_leaf_size,
                             len(label_order))


def _leaf_from_codes(leaf_id: str, codes: np.ndarray,
                     label_order: Sequence[str]) -> LeafNode:
    counts = np.bincount(codes, minlength=len(label_order))
    label_counts = {label: int(c) for label, c in zip(label_order, counts) if c > 0}
    predicted = label_order[int(np.argmax(counts))]  # first max = label order
    return LeafNode(id=leaf_id, label_counts=label_counts, predicted_label=predicted)


def fit_tree(X, y: Sequence, param_ids: Sequence[str], space: str,
             min_leaf_size: int, label_order: Sequence[str]) -> DecisionTree:
    """Grow a tree greedily; deterministic for identical input.

    ``label_order`` fixes argmax tie-breaking in leaves and must list every
    label appearing in ``y``. Growth and assembly are iterative, so deep
    trees (min_leaf_size=1 on large data) do not hit recursion limits.
    """
    if min_leaf_size < 1:
        raise ValueError("min leaf size must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if len(X) == 0:
        raise ValueError("empty training set")
    if X.shape[1] != len(param_ids):
        raise ValueError("column count does not match parameter ids")
    param_ids = tuple(param_ids)
    codes = _encode_labels(y, label_order)
    n_labels = len(label_order)

    # Phase 1: grow into a flat node table (children indices always exceed
    # the parent's), numbering leaves in left-to-right order.
    table: list = []  # LeafNode | [Split, left_index, right_index]
    leaf_counter = 0
    stack: list[tuple[np.ndarray, int, bool]] = [(np.arange(len(codes)), -1, False)]
    while stack:
        idx, parent, is_right = stack.pop()
        sub_y = codes[idx]
        split = None
        if len(idx) >= 2 and (sub_y != sub_y[0]).any():
            split = _best_split_codes(X[idx], sub_y, param_ids,
                                      min_leaf_size, n_labels)
        pos = len(table)
        if split is None:
            table.append(_leaf_from_codes(f"L{leaf_counter}", sub_y, label_order))
            leaf_counter += 1
        else:
            j = param_ids.index(split.parameter_id)
            mask = X[idx, j] <= split.threshold
            table.append([split, -1, -1])
            # Right pushed first so the left subtree is processed (and its
            # leaves numbered) before the right subtree.
            stack.append((idx[~mask], pos, True))
            stack.append((idx[mask], pos, False))
        if parent >= 0:
            table[parent][2 if is_right else 1] = pos

    # Phase 2: assemble frozen nodes bottom-up (reverse creation order).
    built: list[Optional[TreeNode]] = [None] * len(table)
    for i in range(len(table) - 1, -1, -1):
        entry = table[i]
        if isinstance(entry, LeafNode):
            built[i] = entry
        else:
            split, li, ri = entry
            built[i] = SplitNode(parameter_id=split.parameter_id,
                                 threshold=split.threshold,
                                 left=built[li], right=built[ri])

    return DecisionTree(
        root=built[0], space=space, min_leaf_size=min_leaf_size,
        training_sample_count=len(codes), param_ids=param_ids,
        labels=tuple(label_order),
    )


def predict_leaf(tree: DecisionTree, observation: Mapping[str, float]
                 ) -> tuple[str, str]:
    """Route one observation to its unique leaf.

    Values equal to a threshold route left (the <= branch).
    """
    node = tree.root
    while isinstance(node, SplitNode):
        if node.parameter_id not in observation:
            raise ValueError(f"missing parameter: {node.parameter_id}")
        v = observation[node.parameter_id]
        if math.isnan(v):
            raise ValueError("non-finite observation")
        node = node.left if v <= node.threshold else node.right
    return node.id, node.predicted_label


def apply_tree(tree: DecisionTree, X) -> list[str]:
    """Leaf id for every row of a matrix laid out in ``tree.param_ids`` order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    col = {pid: j for j, pid in enumerate(tree.param_ids)}
    out: list[str] = []
    for row in X:
        node = tree.root
        while isinstance(node, SplitNode):
            node = node.left if row[col[node.parameter_id]] <= node.threshold \
                else node.right
        out.append(node.id)
    return out


def dump_tree(tree: DecisionTree) -> str:
    """Indented text rendering of the learned rules, for inspection."""
    lines = [f"tree space={tree.space} minLeafSize={tree.min_leaf_size} "
             f"samples={tree.training_sample_count}"]
    stack: list[tuple[TreeNode, int, str]] = [(tree.root, 0, "")]
    while stack:
        node, depth, edge = stack.pop()
        pad = "  " * depth
        if edge:
            lines.append(f"{pad}{edge}")
        if isinstance(node, LeafNode):
            counts = ", ".join(f"{k}={v}"
                               for k, v in sorted(node.label_counts.items()))
            lines.append(f"{pad}[{node.id}] -> {node.predicted_label} ({counts})")
        else:
            stack.append((node.right, depth + 1,
                          f"{node.parameter_id} > {node.threshold:g}"))
            stack.append((node.left, depth + 1,
                          f"{node.parameter_id} <= {node.threshold:g}"))
    return "\n".join(lines)
