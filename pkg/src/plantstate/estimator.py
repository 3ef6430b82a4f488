"""Scikit-learn style front end over the full state-model pipeline.

``MachineStateModel`` follows the estimator protocol (constructor params
echoed as attributes, ``fit`` returns self, fitted attributes carry a
trailing underscore, ``get_params``/``set_params`` via ``BaseEstimator``),
so it clones and composes with the wider ecosystem. Feature matrices are
laid out by the manifest: status columns (sensors then applied settings in
manifest order are both part of the status space) followed by one
``<id>__new`` column per setting.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from plantstate.analytics import (
    CompositeMatcher,
    DEFAULT_DECISION_THRESHOLD,
    Recommendation,
    build_composites_arrays,
)
from plantstate.core import (
    MachineStatus,
    ModelBundle,
    ParameterDef,
    ProcessSnapshot,
    QualityConfig,
    SPACE_NEW_SETTINGS,
    SPACE_STATUS,
    VERDICT_UNKNOWN,
    setting_ids,
    status_param_ids,
)
from plantstate.ingest import TrainingSet
from plantstate.states import scored_set_for_tree_arrays, space_matrix
from plantstate.tree import fit_tree


def feature_names(manifest: Sequence[ParameterDef]) -> list[str]:
    """Column layout of the estimator matrix."""
    return status_param_ids(manifest) + [f"{pid}__new"
                                         for pid in setting_ids(manifest)]


def training_matrices(training_set: TrainingSet
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(status matrix, new-settings matrix, labels) from a training set."""
    x_status = space_matrix(training_set.samples, training_set.manifest,
                            SPACE_STATUS)
    x_new = space_matrix(training_set.samples, training_set.manifest,
                         SPACE_NEW_SETTINGS)
    y = np.array([s.label for s in training_set.samples])
    return x_status, x_new, y


def estimator_matrix(training_set: TrainingSet) -> tuple[np.ndarray, np.ndarray]:
    """(X, y) in the estimator's column layout."""
    x_status, x_new, y = training_matrices(training_set)
    return np.hstack([x_status, x_new]), y


class MachineStateModel(BaseEstimator):
    """Learns interpretable machine states and predicts quality outlooks.

    Parameters
    ----------
    manifest : sequence of ParameterDef
        Declares the columns of X (see ``feature_names``).
    quality_config : QualityConfig
        Label set and target label; ``y`` must use these labels.
    min_leaf_size : int
        Floor on samples per tree leaf, the sole granularity knob.
    decision_threshold : float
        Likelihood at or above which a prediction counts as on-target.
    """

    def __init__(self, manifest=None, quality_config=None,
                 min_leaf_size: int = 30,
                 decision_threshold: float = DEFAULT_DECISION_THRESHOLD):
        self.manifest = manifest
        self.quality_config = quality_config
        self.min_leaf_size = min_leaf_size
        self.decision_threshold = decision_threshold

    # -- fitting -------------------------------------------------------------

    def fit(self, X, y, training_window: tuple[int, int] = (0, 0),
            fingerprint: str = ""):
        if self.manifest is None or self.quality_config is None:
            raise ValueError("manifest and quality_config are required to fit")
        manifest = tuple(self.manifest)
        quality: QualityConfig = self.quality_config
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        n_status = len(status_param_ids(manifest))
        n_new = len(setting_ids(manifest))
        if X.ndim != 2 or X.shape[1] != n_status + n_new:
            raise ValueError(
                f"X must have {n_status + n_new} columns "
                f"(status then new-settings); got {X.shape}"
            )
        x_status = X[:, :n_status]
        x_new = X[:, n_status:]

        label_order = list(quality.labels)
        status_tree = fit_tree(x_status, y, status_param_ids(manifest),
                               SPACE_STATUS, self.min_leaf_size, label_order)
        settings_tree = fit_tree(x_new, y, setting_ids(manifest),
                                 SPACE_NEW_SETTINGS, self.min_leaf_size,
                                 label_order)

        scored_status = scored_set_for_tree_arrays(status_tree, manifest,
                                                   x_status, y,
                                                   quality.target_label)
        scored_settings = scored_set_for_tree_arrays(settings_tree, manifest,
                                                     x_new, y,
                                                     quality.target_label)
        composites = build_composites_arrays(
            scored_status.states, scored_settings.states,
            x_status, status_param_ids(manifest),
            x_new, setting_ids(manifest),
            y == quality.target_label,
        )

        self.bundle_ = ModelBundle(
            manifest=manifest, quality_config=quality,
            training_window=training_window,
            min_leaf_size=self.min_leaf_size,
            status_tree=status_tree, settings_tree=settings_tree,
            status_states=tuple(scored_status.states),
            settings_states=tuple(scored_settings.states),
            composites=tuple(composites),
            dataset_fingerprint=fingerprint,
        )
        self.matcher_ = CompositeMatcher.from_bundle(self.bundle_)
        self.feature_names_ = feature_names(manifest)
        return self

    # -- inference -----------------------------------------------------------

    def _split_row(self, row: np.ndarray) -> ProcessSnapshot:
        manifest = tuple(self.manifest)
        sensors = {}
        settings = {}
        new = {}
        status_ids = status_param_ids(manifest)
        for j, pid in enumerate(status_ids):
            kind_sensor = manifest[j].kind == "sensor"
            (sensors if kind_sensor else settings)[pid] = float(row[j])
        for k, pid in enumerate(setting_ids(manifest)):
            new[pid] = float(row[len(status_ids) + k])
        return ProcessSnapshot(
            status=MachineStatus(sensors=sensors, settings=settings),
            new_settings=new,
        )

    def predict(self, X) -> np.ndarray:
        """Verdict per row: target, offTarget or unknown."""
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = [
            self.matcher_.predict_quality(self._split_row(row),
                                          self.decision_threshold).verdict
            for row in X
        ]
        return np.array(out)

    def predict_likelihood(self, X) -> np.ndarray:
        """Goodness of the matched composite per row; NaN when unknown."""
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = []
        for row in X:
            p = self.matcher_.predict_quality(self._split_row(row),
                                              self.decision_threshold)
            out.append(np.nan if p.verdict == VERDICT_UNKNOWN else p.likelihood)
        return np.array(out)

    def recommend(self, x_status) -> Recommendation:
        """Settings recommendation for one status row (status columns only)."""
        self._check_fitted()
        row = np.asarray(x_status, dtype=float).ravel()
        manifest = tuple(self.manifest)
        status_ids = status_param_ids(manifest)
        if len(row) != len(status_ids):
            raise ValueError(f"status row must have {len(status_ids)} values")
        sensors = {}
        settings = {}
        for j, pid in enumerate(status_ids):
            (sensors if manifest[j].kind == "sensor" else settings)[pid] = float(row[j])
        return self.matcher_.recommend_settings(
            MachineStatus(sensors=sensors, settings=settings))

    def _check_fitted(self) -> None:
        if not hasattr(self, "bundle_"):
            raise ValueError("model is not fitted")


def train_model(training_set: TrainingSet, min_leaf_size: int,
                decision_threshold: float = DEFAULT_DECISION_THRESHOLD,
                fingerprint: str = "") -> ModelBundle:
    """Fit the full pipeline on a training set and return the bundle."""
    est = MachineStateModel(
        manifest=tuple(training_set.manifest),
        quality_config=training_set.quality_config,
        min_leaf_size=min_leaf_size,
        decision_threshold=decision_threshold,
    )
    X, y = estimator_matrix(training_set)
    est.fit(X, y, training_window=training_set.window, fingerprint=fingerprint)
    return est.bundle_
