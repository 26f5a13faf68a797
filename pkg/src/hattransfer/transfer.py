"""Hierarchy-guided attribute transfer and class scoring for unseen classes."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .annotation import AttributeSignatureMatrix, NodeAttributeTable
from .classifier import ModelBank
from .exceptions import AttributeUntransferable, ClassUnscorable, InputError, TooFewSamples
from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Scores with one row per sample and one column per target."""

    sample_ids: tuple
    columns: tuple
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        ids, cols = tuple(self.sample_ids), tuple(self.columns)
        if values.shape != (len(ids), len(cols)):
            raise InputError(f"score values shape {values.shape} != ({len(ids)}, {len(cols)})")
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "values", values)

    def column(self, name) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def __eq__(self, other):
        if not isinstance(other, ScoreTable):
            return NotImplemented
        return (self.sample_ids == other.sample_ids and self.columns == other.columns
                and self.normalized == other.normalized and np.array_equal(self.values, other.values))


def matching_ancestors(bank: ModelBank, table: NodeAttributeTable, t: Taxonomy, z: str, m: str) -> list[str]:
    """Ancestors of ``z`` where ``m`` is active and a classifier was trained."""
    return [n for n in t.ancestors(z) if table.value(n, m) and (n, m) in bank]


def hat_attribute_score(bank: ModelBank, table: NodeAttributeTable, t: Taxonomy, z: str, m: str, x) -> float:
    """Mean score of the matching ancestor classifiers for attribute ``m``."""
    anc = matching_ancestors(bank, table, t, z, m)
    if not anc:
        raise AttributeUntransferable(f"no ancestor of {z!r} has a classifier for {m!r}")
    return float(np.mean([bank[(n, m)].score(np.asarray(x, dtype=np.float64)) for n in anc]))


def hat_class_score(bank: ModelBank, table: NodeAttributeTable, t: Taxonomy,
                    signatures: AttributeSignatureMatrix, z: str, x) -> float:
    scores = []
    for m in signatures.active(z):
        try:
            scores.append(hat_attribute_score(bank, table, t, z, m, x))
        except AttributeUntransferable as exc:
            logger.info("%s", exc)
    if not scores:
        raise ClassUnscorable(f"class {z!r} has no transferable active attribute")
    return float(np.mean(scores))


def transfer_weights(bank: ModelBank, table: NodeAttributeTable, t: Taxonomy,
                     signatures: AttributeSignatureMatrix, classes=None):
    """Express every class score as a fixed mix of classifier scores.

    Averaging over ancestors and then over attributes is linear in the
    classifier outputs, so class scores for a batch are ``S @ W`` with
    ``S`` the ``(n, K)`` matrix of classifier scores. Returns ``(keys, W)``.
    """
    classes = list(signatures.classes if classes is None else classes)
    mix: list[dict] = []
    for z in classes:
        per_attr = []
        for m in signatures.active(z):
            anc = matching_ancestors(bank, table, t, z, m)
            if anc:
                per_attr.append([(n, m) for n in anc])
            else:
                logger.info("attribute %r of class %r is not transferable; skipped", m, z)
        if not per_attr:
            raise ClassUnscorable(f"class {z!r} has no transferable active attribute")
        weights: dict = {}
        for keys in per_attr:
            for k in keys:
                weights[k] = weights.get(k, 0.0) + 1.0 / (len(keys) * len(per_attr))
        mix.append(weights)
    keys = sorted({k for w in mix for k in w})
    col = {k: i for i, k in enumerate(keys)}
    W = np.zeros((len(keys), len(classes)))
    for j, weights in enumerate(mix):
        for k, v in weights.items():
            W[col[k], j] = v
    return keys, W


def score_batch(bank: ModelBank, table: NodeAttributeTable, t: Taxonomy,
                signatures: AttributeSignatureMatrix, X, sample_ids=None, classes=None) -> ScoreTable:
    """Un-normalized class scores for every sample and unseen class."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    classes = sorted(signatures.classes if classes is None else classes)
    for z in classes:
        if z not in t:
            raise InputError(f"unseen class {z!r} is not placed in the taxonomy")
    keys, W = transfer_weights(bank, table, t, signatures, classes)
    S = bank.score_matrix(X, keys)
    ids = tuple(range(X.shape[0])) if sample_ids is None else tuple(sample_ids)
    return ScoreTable(ids, tuple(classes), S @ W)


def normalize_class_scores(s: ScoreTable) -> ScoreTable:
    """Standardize each column over the batch (population std); flat columns become 0."""
    if s.normalized:
        raise InputError("score table is already normalized")
    if s.values.shape[0] < 2:
        raise TooFewSamples("normalization needs at least two samples")
    mean = s.values.mean(axis=0)
    std = s.values.std(axis=0)
    centered = s.values - mean
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    out = np.divide(centered, std, out=np.zeros_like(centered), where=~flat)
    return ScoreTable(s.sample_ids, s.columns, out, normalized=True)


def classify(s: ScoreTable) -> list:
    """Per-row argmax; ties go to the lexicographically smallest class id."""
    order = sorted(range(len(s.columns)), key=lambda j: str(s.columns[j]))
    if not order:
        raise InputError("score table has no columns")
    vals = s.values[:, order]
    best = np.argmax(vals, axis=1)
    return [s.columns[order[b]] for b in best]
