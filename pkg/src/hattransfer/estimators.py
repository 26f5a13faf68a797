"""scikit-learn compatible wrappers.

``LogisticAttributeClassifier`` is the binary attribute classifier on its
own. ``HATClassifier`` runs the whole zero-shot pipeline: ``fit`` takes
samples of the seen classes, ``predict`` returns unseen class ids.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .annotation import AttributeSignatureMatrix, binarize_occurrence, class_occurrence, propagate
from .classifier import DEFAULT_GRID, FALLBACK_C, TrainConfig, fit_logistic, select_cost, train_model_bank
from .dataset import Dataset
from .exceptions import FallbackCost, InputError
from .pipeline import METHODS, zero_shot_scores
from .supportsets import PER_CLASS, PER_IMAGE
from .taxonomy import SEEN, UNSEEN, Taxonomy, parse_taxonomy, prune_single_child
from .transfer import classify


class LogisticAttributeClassifier(ClassifierMixin, BaseEstimator):
    """L2-regularized logistic regression with an unregularized bias.

    With ``C=None`` the cost is picked from ``c_grid`` by stratified
    cross-validation (falling back to 1.0 when a class is too small).
    """

    def __init__(self, C=None, c_grid=DEFAULT_GRID, folds=5, seed=0, tol=1e-6, max_iter=10000):
        self.C = C
        self.c_grid = c_grid
        self.folds = folds
        self.seed = seed
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise InputError(f"need exactly two classes, got {len(self.classes_)}")
        pos = y == self.classes_[1]
        P, N = X[pos], X[~pos]
        cost = self.C
        if cost is None:
            try:
                cost = select_cost(P, N, tuple(self.c_grid), self.folds, self.seed, tol=self.tol, max_iter=self.max_iter)
            except FallbackCost:
                cost = FALLBACK_C
        res = fit_logistic(P, N, cost, self.tol, self.max_iter)
        self.C_ = float(cost)
        self.coef_ = res.weights.reshape(1, -1)
        self.intercept_ = np.array([res.bias])
        self.n_iter_ = res.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_[0] + self.intercept_[0]

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]


class HATClassifier(ClassifierMixin, BaseEstimator):
    """Zero-shot classifier over a class taxonomy.

    Parameters
    ----------
    taxonomy : Taxonomy or dict
        Tree whose leaves are all classes. Leaves present in ``y`` at fit
        time become seen, all other leaves unseen.
    signatures : AttributeSignatureMatrix
        Binary class descriptions. Must cover the unseen leaves, and the
        seen ones too unless ``annotation_mode="per-image"``.
    method : {"hat", "dap", "ens"}
    normalize : bool
        Standardize class scores over each predicted batch (ignored by DAP).
    fallback_parent : bool
        Describe unseen classes by their parent's propagated attributes.
    """

    def __init__(self, taxonomy=None, signatures=None, method="hat", annotation_mode=PER_CLASS,
                 c_grid=DEFAULT_GRID, folds=5, seed=0, normalize=True, fallback_parent=False, n_jobs=1):
        self.taxonomy = taxonomy
        self.signatures = signatures
        self.method = method
        self.annotation_mode = annotation_mode
        self.c_grid = c_grid
        self.folds = folds
        self.seed = seed
        self.normalize = normalize
        self.fallback_parent = fallback_parent
        self.n_jobs = n_jobs

    def fit(self, X, y, attribute_labels=None, sample_ids=None):
        """Train on samples of seen classes.

        ``attribute_labels`` (``(n, M)`` binary, columns following the
        signature attributes) is needed for per-image annotation.
        """
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}")
        if not isinstance(self.signatures, AttributeSignatureMatrix):
            raise InputError("signatures must be an AttributeSignatureMatrix")
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y).astype(str).astype(object)
        t = self.taxonomy if isinstance(self.taxonomy, Taxonomy) else parse_taxonomy(self.taxonomy)
        leaves = set(t.seen_leaves) | set(t.unseen_leaves)
        seen = sorted(set(y.tolist()))
        stray = set(seen) - leaves
        if stray:
            raise InputError(f"labels are not taxonomy leaves: {sorted(stray)[:5]}")
        kinds = {z: (SEEN if z in seen else UNSEEN) for z in leaves}
        t = prune_single_child(t.with_kinds(kinds))
        ids = np.arange(len(y)).astype(str) if sample_ids is None else np.asarray(sample_ids, dtype=object)
        attrs = self.signatures.attributes
        data = Dataset(ids, X, y, attribute_labels, attrs if attribute_labels is not None else None)
        if self.annotation_mode == PER_IMAGE:
            if attribute_labels is None:
                raise InputError("per-image annotation needs attribute_labels")
            seen_sig = binarize_occurrence(class_occurrence(data.attribute_labels, y, attrs, classes=seen))
        else:
            seen_sig = self.signatures.select(seen)
        config = TrainConfig(c_grid=tuple(self.c_grid), folds=self.folds, seed=self.seed,
                             annotation_mode=self.annotation_mode, n_jobs=self.n_jobs)
        table = propagate(t, seen_sig)
        self.bank_ = train_model_bank(t, table, data, seen_sig, config)
        self.taxonomy_ = t
        self.table_ = table
        self.seen_classes_ = np.array(seen, dtype=object)
        self.classes_ = np.array(sorted(t.unseen_leaves), dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def _scores(self, X):
        check_is_fitted(self, "bank_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return zero_shot_scores(self.method, self.bank_, self.taxonomy_, self.signatures, X,
                                normalize=self.normalize, fallback_parent=self.fallback_parent, table=self.table_)

    def decision_function(self, X):
        """Class scores, one column per entry of ``classes_``."""
        s = self._scores(X)
        return s.values[:, [s.columns.index(z) for z in self.classes_]]

    def predict(self, X):
        return np.array(classify(self._scores(X)), dtype=object)
