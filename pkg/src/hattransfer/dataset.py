"""Sample container shared by training, scoring and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InputError, NonFiniteFeature


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature rows with per-sample class ids and optional image-level attributes.

    ``attribute_labels`` is an ``(n, M)`` binary array whose columns follow
    ``attributes``.
    """

    sample_ids: np.ndarray
    X: np.ndarray
    classes: np.ndarray
    attribute_labels: np.ndarray | None = None
    attributes: tuple[str, ...] | None = None

    def __post_init__(self):
        ids = np.asarray(self.sample_ids, dtype=object)
        X = np.asarray(self.X, dtype=np.float64)
        classes = np.asarray(self.classes, dtype=object)
        if X.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {X.shape}")
        if not (len(ids) == len(classes) == X.shape[0]):
            raise DimensionMismatch(
                f"{len(ids)} ids, {len(classes)} class labels, {X.shape[0]} feature rows"
            )
        if len(set(ids.tolist())) != len(ids):
            raise InputError("sample ids are not unique")
        if not np.all(np.isfinite(X)):
            raise NonFiniteFeature("feature matrix contains NaN or infinite values")
        labels = self.attribute_labels
        attrs = self.attributes
        if labels is not None:
            labels = np.asarray(labels)
            if attrs is None or labels.shape != (X.shape[0], len(attrs)):
                raise DimensionMismatch("attribute labels must be (n_samples, n_attributes)")
            if not np.isin(labels, (0, 1)).all():
                raise InputError("image-level attribute labels must be binary")
            labels = labels.astype(np.uint8)
            attrs = tuple(attrs)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "attribute_labels", labels)
        object.__setattr__(self, "attributes", attrs)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n_samples

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.sample_ids[rows],
            self.X[rows],
            self.classes[rows],
            None if self.attribute_labels is None else self.attribute_labels[rows],
            self.attributes,
        )

    def select_classes(self, class_ids) -> "Dataset":
        keep = np.isin(self.classes, list(class_ids))
        return self.subset(np.flatnonzero(keep))

    def with_attribute_labels(self, labels, attributes) -> "Dataset":
        return Dataset(self.sample_ids, self.X, self.classes, labels, tuple(attributes))
