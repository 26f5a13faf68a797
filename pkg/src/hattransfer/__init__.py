"""Hierarchical transfer of semantic attributes for zero-shot classification.

Attribute classifiers are trained at every node of a class taxonomy, each
one contrasting a subtree against its siblings. An unseen class is scored
by averaging the classifiers of its ancestors for each of its attributes.
"""

from .annotation import (
    AttributeSignatureMatrix,
    NodeAttributeTable,
    OccurrenceMatrix,
    binarize_occurrence,
    class_occurrence,
    fallback_signatures,
    propagate,
)
from .baselines import dap_scores, ens_scores
from .classifier import AttributeClassifier, ModelBank, TrainConfig, fit_logistic, select_cost, train_model_bank
from .dataset import Dataset
from .estimators import HATClassifier, LogisticAttributeClassifier
from .exceptions import HATError, InputError
from .metrics import evaluate, multiclass_accuracy, roc_auc
from .supportsets import PER_CLASS, PER_IMAGE, SupportSets
from .synth import SynthSpec, generate
from .taxonomy import Node, Taxonomy, parse_taxonomy, prune_single_child
from .transfer import ScoreTable, classify, normalize_class_scores, score_batch

__version__ = "0.1.0"

__all__ = [
    "AttributeClassifier",
    "AttributeSignatureMatrix",
    "Dataset",
    "HATClassifier",
    "HATError",
    "InputError",
    "LogisticAttributeClassifier",
    "ModelBank",
    "Node",
    "NodeAttributeTable",
    "OccurrenceMatrix",
    "PER_CLASS",
    "PER_IMAGE",
    "ScoreTable",
    "SupportSets",
    "SynthSpec",
    "Taxonomy",
    "TrainConfig",
    "binarize_occurrence",
    "class_occurrence",
    "classify",
    "dap_scores",
    "ens_scores",
    "evaluate",
    "fallback_signatures",
    "fit_logistic",
    "generate",
    "multiclass_accuracy",
    "normalize_class_scores",
    "parse_taxonomy",
    "propagate",
    "prune_single_child",
    "roc_auc",
    "score_batch",
    "select_cost",
    "train_model_bank",
]
