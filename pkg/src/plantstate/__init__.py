"""Interpretable machine-state analytics for production quality.

Learns hyperrectangle machine states from historical telemetry via an
interpretable decision tree, scores them by popularity and goodness, and
serves real-time quality predictions and settings recommendations.
"""

from plantstate.analytics import (
    CompositeMatcher,
    Prediction,
    Recommendation,
    build_composites,
    predict_quality,
    recommend_settings,
)
from plantstate.core import (
    CompositeState,
    Interval,
    MachineSnapshot,
    MachineStatus,
    ModelBundle,
    ParameterDef,
    ProcessSnapshot,
    ProductionRun,
    QualityConfig,
    State,
    interval_contains,
    load_bundle,
    save_bundle,
    state_matches,
    validate_bundle,
)
from plantstate.estimator import MachineStateModel, train_model
from plantstate.ingest import (
    Dataset,
    TrainingSample,
    TrainingSet,
    align_snapshots,
    build_training_set,
    derive_new_settings,
    ingest_dataset,
    label_runs,
    load_dataset,
)
from plantstate.states import extract_rules, rules_to_states, score_states
from plantstate.tree import DecisionTree, best_split, dump_tree, fit_tree, gini, predict_leaf

__version__ = "0.1.0"

__all__ = [
    "CompositeMatcher", "CompositeState", "Dataset", "DecisionTree",
    "Interval", "MachineSnapshot", "MachineStateModel", "MachineStatus",
    "ModelBundle", "ParameterDef", "Prediction", "ProcessSnapshot",
    "ProductionRun", "QualityConfig", "Recommendation", "State",
    "TrainingSample", "TrainingSet",
    "align_snapshots", "best_split", "build_composites",
    "build_training_set", "derive_new_settings", "dump_tree", "extract_rules",
    "fit_tree", "gini", "ingest_dataset", "interval_contains", "label_runs",
    "load_bundle", "load_dataset", "predict_leaf", "predict_quality",
    "recommend_settings", "rules_to_states", "save_bundle", "score_states",
    "state_matches", "train_model", "validate_bundle",
]
