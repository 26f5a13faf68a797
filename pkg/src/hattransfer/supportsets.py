"""Attribute support sets and the positive/negative pools each classifier trains on."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .annotation import AttributeSignatureMatrix, NodeAttributeTable
from .dataset import Dataset
from .exceptions import EmptyPositives, InputError, NoContrast, UnknownAttribute, UnknownNode
from .taxonomy import INTERNAL, SEEN, Taxonomy

logger = logging.getLogger(__name__)

PER_CLASS = "per-class"
PER_IMAGE = "per-image"
ANNOTATION_MODES = (PER_CLASS, PER_IMAGE)


@dataclass(frozen=True)
class TrainingSets:
    positives: frozenset
    negatives: frozenset


def _check_mode(mode):
    if mode not in ANNOTATION_MODES:
        raise InputError(f"annotation mode must be one of {ANNOTATION_MODES}, got {mode!r}")


def label_mask(n: str, m: str, data: Dataset, sig: AttributeSignatureMatrix, mode: str = PER_CLASS,
               t: Taxonomy | None = None) -> np.ndarray:
    """Boolean mask over ``data`` of the samples labeled with ``m`` in class ``n``."""
    _check_mode(mode)
    j = sig.attr_index(m)
    if t is not None and t.kind(n) == INTERNAL:
        return np.zeros(data.n_samples, bool)
    in_class = data.classes == n
    if mode == PER_IMAGE:
        if data.attribute_labels is None:
            raise InputError("per-image mode needs image-level attribute labels")
        try:
            col = data.attributes.index(m)
        except ValueError:
            raise UnknownAttribute(f"attribute {m!r} missing from image labels") from None
        return in_class & (data.attribute_labels[:, col] == 1)
    if n not in sig:
        return np.zeros(data.n_samples, bool)
    return in_class if sig.values[sig.row_index(n), j] else np.zeros(data.n_samples, bool)


def label_set(n, m, data, sig, mode=PER_CLASS, t=None) -> frozenset:
    return frozenset(data.sample_ids[label_mask(n, m, data, sig, mode, t)].tolist())


class SupportSets:
    """Memoized support sets for one training run.

    A node's support for attribute ``m`` is empty unless ``m`` is active at
    that node; otherwise it is the union of its own labeled samples and the
    supports of its children.
    """

    def __init__(self, t: Taxonomy, table: NodeAttributeTable, data: Dataset,
                 sig: AttributeSignatureMatrix, mode: str = PER_CLASS, memoize: bool = True):
        _check_mode(mode)
        self.t = t
        self.table = table
        self.data = data
        self.sig = sig
        self.mode = mode
        self.memoize = memoize
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def mask(self, n: str, m: str) -> np.ndarray:
        key = (n, m)
        if self.memoize and key in self._cache:
            return self._cache[key]
        if n not in self.t:
            raise UnknownNode(f"unknown node {n!r}")
        if not self.table.value(n, m):
            out = np.zeros(self.data.n_samples, bool)
        else:
            out = (
                label_mask(n, m, self.data, self.sig, self.mode, self.t)
                if self.t.kind(n) == SEEN
                else np.zeros(self.data.n_samples, bool)
            )
            for c in self.t.children(n):
                if self.table.value(c, m):
                    out = out | self.mask(c, m)
        out.setflags(write=False)
        if self.memoize:
            self._cache[key] = out
        return out

    def support_set(self, n: str, m: str) -> frozenset:
        return frozenset(self.data.sample_ids[self.mask(n, m)].tolist())

    def training_masks(self, n: str, m: str) -> tuple[np.ndarray, np.ndarray]:
        """Positive and negative masks for the classifier of ``(n, m)``.

        Child-vs-parent below the root, one-vs-all at the root.
        """
        pos = self.mask(n, m)
        parent = self.t.parent(n)
        if parent is None:
            neg = ~pos
        else:
            neg = self.mask(parent, m) & ~pos
        if not pos.any():
            raise EmptyPositives(f"no positive samples for ({n}, {m})")
        if not neg.any():
            raise NoContrast(f"no negative samples for ({n}, {m})")
        return pos, neg

    def training_sets(self, child: str, m: str) -> TrainingSets:
        if self.t.parent(child) is None:
            raise InputError("the root has no parent; use root_training_sets")
        return self._to_sets(*self.training_masks(child, m))

    def root_training_sets(self, m: str) -> TrainingSets:
        return self._to_sets(*self.training_masks(self.t.root, m))

    def _to_sets(self, pos, neg):
        ids = self.data.sample_ids
        return TrainingSets(frozenset(ids[pos].tolist()), frozenset(ids[neg].tolist()))


def support_set(n, m, t, table, data, sig, mode=PER_CLASS) -> frozenset:
    return SupportSets(t, table, data, sig, mode).support_set(n, m)


def training_sets(child, m, t, table, data, sig, mode=PER_CLASS) -> TrainingSets:
    return SupportSets(t, table, data, sig, mode).training_sets(child, m)


def root_training_sets(m, t, table, data, sig, mode=PER_CLASS) -> TrainingSets:
    return SupportSets(t, table, data, sig, mode).root_training_sets(m)


def support_size_rows(sets: SupportSets):
    """(node, attribute, size) for every active pair; for diagnostic dumps."""
    rows = []
    for n in sets.t:
        for m in sets.table.active(n):
            rows.append((n, m, int(sets.mask(n, m).sum())))
    return rows
