"""Global-attribute baselines built on the root (one-vs-all) classifiers.

DAP picks the class whose signature is most probable under independent
attribute posteriors; ENS averages the global scores of each class's active
attributes.
"""

from __future__ import annotations

import numpy as np

from .annotation import AttributeSignatureMatrix
from .classifier import ModelBank
from .exceptions import MissingRootClassifier, NoActiveAttributes
from .transfer import ScoreTable

PROB_CLAMP = 1e-12


def _root_scores(root_classifiers: dict, attributes, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cols = [root_classifiers[m].score(X) for m in attributes]
    return np.stack(cols, axis=1) if cols else np.zeros((X.shape[0], 0))


def _priors(priors, attributes):
    if priors is None:
        return np.full(len(attributes), 0.5)
    if isinstance(priors, dict):
        return np.array([priors[m] for m in attributes], dtype=np.float64)
    return np.broadcast_to(np.asarray(priors, dtype=np.float64), (len(attributes),))


def dap_scores(root_classifiers: dict, signatures: AttributeSignatureMatrix, X, priors=None,
               classes=None, on_missing: str = "raise") -> np.ndarray:
    """Log-posterior class scores, shape ``(n_samples, n_classes)``.

    Attributes inactive in every listed class add the same term to all
    classes and are left out when they lack a root classifier. Any other
    attribute without one raises, unless ``on_missing="skip"``, which treats
    it as carrying no evidence (posterior equal to the prior).
    """
    classes = list(signatures.classes if classes is None else classes)
    A = np.stack([signatures.values[signatures.row_index(z)] for z in classes]).astype(bool)
    attrs = list(signatures.attributes)
    used = []
    for j, m in enumerate(attrs):
        if m in root_classifiers:
            used.append(j)
        elif A[:, j].any() and on_missing != "skip":
            raise MissingRootClassifier(f"no root classifier for attribute {m!r}")
    used_attrs = [attrs[j] for j in used]
    A = A[:, used]
    p1 = np.clip(_root_scores(root_classifiers, used_attrs, X), PROB_CLAMP, 1 - PROB_CLAMP)
    log1, log0 = np.log(p1), np.log1p(-p1)
    prior = np.clip(_priors(priors, used_attrs), PROB_CLAMP, 1 - PROB_CLAMP)
    likelihood = log1 @ A.T + log0 @ (~A).T
    log_prior = (A * np.log(prior) + (~A) * np.log1p(-prior)).sum(axis=1)
    return likelihood - log_prior


def ens_scores(root_classifiers: dict, signatures: AttributeSignatureMatrix, X, classes=None) -> np.ndarray:
    """Mean root score over each class's active attributes."""
    classes = list(signatures.classes if classes is None else classes)
    attrs = [m for m in signatures.attributes if m in root_classifiers]
    S = _root_scores(root_classifiers, attrs, X)
    W = np.zeros((len(attrs), len(classes)))
    for j, z in enumerate(classes):
        act = [i for i, m in enumerate(attrs) if signatures.value(z, m)]
        if not act:
            raise NoActiveAttributes(f"class {z!r} has no active attribute with a root classifier")
        W[act, j] = 1.0 / len(act)
    return S @ W


def dap_score(root_classifiers, signatures, x, priors=None) -> dict:
    row = dap_scores(root_classifiers, signatures, x, priors)[0]
    return dict(zip(signatures.classes, row.tolist()))


def ens_score(root_classifiers, signatures, x) -> dict:
    row = ens_scores(root_classifiers, signatures, x)[0]
    return dict(zip(signatures.classes, row.tolist()))


def baseline_batch(method: str, bank: ModelBank, root: str, signatures: AttributeSignatureMatrix, X,
                   sample_ids=None, priors=None, on_missing: str = "raise") -> ScoreTable:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    bank.check_features(X.shape[1])
    classes = sorted(signatures.classes)
    roots = bank.root_classifiers(root)
    if method == "dap":
        values = dap_scores(roots, signatures, X, priors, classes, on_missing)
    elif method == "ens":
        values = ens_scores(roots, signatures, X, classes)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    ids = tuple(range(X.shape[0])) if sample_ids is None else tuple(sample_ids)
    return ScoreTable(ids, tuple(classes), values)
