"""Cookie-less CSync classification: features, tree learner, evaluation."""

from .features import (FEATURES, LABELS, FeatureVector, LabeledExample, browser_family,
                       extract_features, label_examples, parse_feature_subset)
from .metrics import MetricReport, class_rates, confusion_matrix, evaluate, roc_auc
from .tree import TreeConfig, TreeModel, entropy, information_gain, train_tree
from .evaluation import cross_validate, run_scenario_a, run_scenario_b

__all__ = [
    "FEATURES", "LABELS", "FeatureVector", "LabeledExample", "browser_family", "extract_features",
    "label_examples", "parse_feature_subset", "MetricReport", "class_rates", "confusion_matrix",
    "evaluate", "roc_auc", "TreeConfig", "TreeModel", "entropy", "information_gain", "train_tree",
    "cross_validate", "run_scenario_a", "run_scenario_b",
]
