"""Class-level attribute descriptions and their propagation up the taxonomy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    EmptyClass,
    InputError,
    LengthMismatch,
    MissingSignature,
    NotUnseenLeaf,
    UnknownAttribute,
    UnknownNode,
)
from .taxonomy import SEEN, UNSEEN, Taxonomy


@dataclass(frozen=True, eq=False)
class _LabeledMatrix:
    rows: tuple[str, ...]
    attributes: tuple[str, ...]
    values: np.ndarray

    _dtype = np.float64

    def __post_init__(self):
        rows = tuple(str(r) for r in self.rows)
        attrs = tuple(str(a) for a in self.attributes)
        values = np.asarray(self.values, dtype=self._dtype)
        if values.ndim != 2 or values.shape != (len(rows), len(attrs)):
            raise InputError(f"values shape {values.shape} != ({len(rows)}, {len(attrs)})")
        if len(set(rows)) != len(rows):
            raise InputError("duplicate row ids")
        if len(set(attrs)) != len(attrs):
            raise InputError("duplicate attribute ids")
        self._validate(values)
        values.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_row_index", {r: i for i, r in enumerate(rows)})
        object.__setattr__(self, "_attr_index", {a: j for j, a in enumerate(attrs)})

    def _validate(self, values):
        pass

    def __contains__(self, row_id) -> bool:
        return row_id in self._row_index

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.attributes == other.attributes
            and np.array_equal(self.values, other.values)
        )

    def row_index(self, row_id: str) -> int:
        try:
            return self._row_index[row_id]
        except KeyError:
            raise UnknownNode(f"no row for {row_id!r}") from None

    def attr_index(self, attribute: str) -> int:
        try:
            return self._attr_index[attribute]
        except KeyError:
            raise UnknownAttribute(f"unknown attribute {attribute!r}") from None

    def row(self, row_id: str) -> np.ndarray:
        return self.values[self.row_index(row_id)].copy()

    def value(self, row_id: str, attribute: str):
        return self.values[self.row_index(row_id), self.attr_index(attribute)]

    def active(self, row_id: str) -> list[str]:
        r = self.values[self.row_index(row_id)]
        return [a for a, v in zip(self.attributes, r) if v]

    def select(self, row_ids) -> "_LabeledMatrix":
        row_ids = list(row_ids)
        idx = [self.row_index(r) for r in row_ids]
        return type(self)(tuple(row_ids), self.attributes, self.values[idx])


class OccurrenceMatrix(_LabeledMatrix):
    """Per-class attribute frequencies in ``[0, 1]``."""

    def _validate(self, values):
        if not np.all((values >= 0) & (values <= 1)):
            raise InputError("occurrence values must lie in [0, 1]")

    @property
    def classes(self):
        return self.rows


class AttributeSignatureMatrix(_LabeledMatrix):
    """Binary class-by-attribute description."""

    _dtype = np.uint8

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.size and not np.isin(values, (0, 1)).all():
            raise InputError("signature entries must be 0 or 1")
        super().__post_init__()

    @property
    def classes(self):
        return self.rows


class NodeAttributeTable(_LabeledMatrix):
    """Binary node-by-attribute activations after propagation."""

    _dtype = np.uint8

    @property
    def nodes(self):
        return self.rows


def class_occurrence(image_attr_labels, sample_classes, attributes=None, classes=None) -> OccurrenceMatrix:
    """Average image-level attribute vectors per class.

    Rows follow ``classes`` when given (each must have samples), otherwise
    the sorted distinct values of ``sample_classes``.
    """
    labels = np.asarray(image_attr_labels, dtype=np.float64)
    sample_classes = np.asarray(sample_classes, dtype=object)
    if labels.ndim != 2:
        raise InputError("image attribute labels must be 2-D")
    if labels.shape[0] != len(sample_classes):
        raise LengthMismatch(f"{labels.shape[0]} label rows vs {len(sample_classes)} class ids")
    if attributes is None:
        attributes = [f"a{j}" for j in range(labels.shape[1])]
    if classes is None:
        classes = sorted(set(sample_classes.tolist()))
    out = np.empty((len(classes), labels.shape[1]))
    for i, c in enumerate(classes):
        mask = sample_classes == c
        if not mask.any():
            raise EmptyClass(f"class {c!r} has no samples")
        out[i] = labels[mask].mean(axis=0)
    return OccurrenceMatrix(tuple(classes), tuple(attributes), out)


def binarize_occurrence(o: OccurrenceMatrix) -> AttributeSignatureMatrix:
    """Threshold at the overall mean; ties with the mean become 0."""
    if o.values.size == 0:
        raise InputError("cannot binarize an empty occurrence matrix")
    theta = o.values.mean()
    return AttributeSignatureMatrix(o.rows, o.attributes, (o.values > theta).astype(np.uint8))


def propagate(t: Taxonomy, sig: AttributeSignatureMatrix) -> NodeAttributeTable:
    """OR seen-leaf signatures bottom-up to every ancestor.

    Unseen-leaf rows present in ``sig`` are copied as-is but never feed
    their ancestors. Unseen leaves without a row get zeros.
    """
    M = len(sig.attributes)
    rows: dict[str, np.ndarray] = {}
    for n in t.postorder():
        kind = t.kind(n)
        if kind == SEEN:
            if n not in sig:
                raise MissingSignature(f"seen class {n!r} has no attribute signature")
            rows[n] = sig.values[sig.row_index(n)].astype(np.uint8)
        elif kind == UNSEEN:
            rows[n] = sig.values[sig.row_index(n)].astype(np.uint8) if n in sig else np.zeros(M, np.uint8)
        else:
            acc = np.zeros(M, np.uint8)
            for c in t.children(n):
                if t.kind(c) != UNSEEN:
                    acc |= rows[c]
            rows[n] = acc
    nodes = tuple(t.nodes)
    values = np.stack([rows[n] for n in nodes]) if nodes else np.zeros((0, M), np.uint8)
    return NodeAttributeTable(nodes, sig.attributes, values)


def parent_signature_fallback(t: Taxonomy, table: NodeAttributeTable, z: str) -> np.ndarray:
    """Use the parent's propagated row as the description of unseen class ``z``."""
    if z not in t:
        raise UnknownNode(f"unknown node {z!r}")
    if t.kind(z) != UNSEEN:
        raise NotUnseenLeaf(f"{z!r} is a {t.kind(z)} node, not an unseen leaf")
    return table.row(t.parent(z))


def fallback_signatures(t: Taxonomy, table: NodeAttributeTable, unseen=None,
                        walk_up: bool = True) -> AttributeSignatureMatrix:
    """Parent-derived signatures for every unseen leaf (or the given ones).

    A parent whose children are all unseen has an empty row; with
    ``walk_up`` the closest ancestor with an active attribute is used instead.
    """
    unseen = t.unseen_leaves if unseen is None else list(unseen)
    rows = []
    for z in unseen:
        row = parent_signature_fallback(t, table, z)
        if walk_up and not row.any():
            for n in reversed(t.ancestors(t.parent(z))):
                row = table.row(n)
                if row.any():
                    break
        rows.append(row)
    return AttributeSignatureMatrix(tuple(unseen), table.attributes, np.stack(rows))
