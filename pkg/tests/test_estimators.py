import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hattransfer.classifier import fit_logistic
from hattransfer.estimators import HATClassifier, LogisticAttributeClassifier
from hattransfer.exceptions import InputError
from hattransfer.pipeline import zero_shot_scores
from hattransfer.synth import SynthSpec, generate
from hattransfer.transfer import classify


@pytest.fixture(scope="module")
def small_bench():
    return generate(SynthSpec(depth=2, branching=4, feature_dim=8, n_attributes=6, samples_per_class=12))


def test_logistic_matches_solver():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(1, 1, (20, 3)), rng.normal(-1, 1, (20, 3))])
    y = np.array(["yes"] * 20 + ["no"] * 20)
    est = LogisticAttributeClassifier(C=0.5).fit(X, y)
    # classes_ are sorted, so "yes" is the positive class
    res = fit_logistic(X[y == "yes"], X[y == "no"], 0.5)
    np.testing.assert_allclose(est.coef_[0], res.weights)
    assert est.intercept_[0] == pytest.approx(res.bias)
    proba = est.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(est.predict(X)) <= {"yes", "no"}
    assert est.score(X, y) > 0.8


def test_logistic_cross_validated_cost():
    rng = np.random.default_rng(1)
    X = np.vstack([rng.normal(1, 1, (15, 2)), rng.normal(-1, 1, (15, 2))])
    y = np.r_[np.ones(15), np.zeros(15)]
    est = LogisticAttributeClassifier(c_grid=(0.1, 1.0)).fit(X, y)
    assert est.C_ in (0.1, 1.0)
    small = LogisticAttributeClassifier().fit(X[:17], y[:17])
    assert small.C_ == 1.0


def test_logistic_errors():
    with pytest.raises(NotFittedError):
        LogisticAttributeClassifier().predict(np.zeros((1, 2)))
    with pytest.raises(InputError):
        LogisticAttributeClassifier().fit(np.zeros((3, 1)), [0, 1, 2])


def test_clone_and_params(small_bench):
    est = HATClassifier(small_bench.taxonomy, small_bench.signatures, method="ens", folds=3)
    params = est.get_params()
    assert params["method"] == "ens" and params["folds"] == 3
    copy = clone(est)
    assert copy.get_params()["method"] == "ens"
    assert copy.set_params(method="dap").method == "dap"


def test_hat_classifier_matches_pipeline(small_bench):
    b = small_bench
    est = HATClassifier(b.taxonomy, b.signatures, folds=3).fit(b.train.X, b.train.classes,
                                                               sample_ids=b.train.sample_ids)
    assert list(est.classes_) == sorted(b.unseen)
    assert list(est.seen_classes_) == sorted(b.seen)
    s = zero_shot_scores("hat", est.bank_, est.taxonomy_, b.signatures, b.test.X, table=est.table_)
    assert est.predict(b.test.X).tolist() == classify(s)
    np.testing.assert_allclose(est.decision_function(b.test.X), s.values)
    assert 0.0 <= est.score(b.test.X, b.test.classes) <= 1.0


def test_hat_classifier_per_image_and_errors(small_bench):
    b = small_bench
    est = HATClassifier(b.taxonomy, b.signatures, annotation_mode="per-image", folds=3)
    with pytest.raises(InputError):
        est.fit(b.train.X, b.train.classes)
    est.fit(b.train.X, b.train.classes, attribute_labels=b.train.attribute_labels)
    assert est.predict(b.test.X[:5]).shape == (5,)
    with pytest.raises(NotFittedError):
        HATClassifier(b.taxonomy, b.signatures).predict(b.test.X)
    with pytest.raises(InputError):
        HATClassifier(b.taxonomy, b.signatures).fit(b.train.X, np.array(["nowhere"] * len(b.train.X)))
    with pytest.raises(InputError):
        HATClassifier(b.taxonomy, b.signatures, method="svm").fit(b.train.X, b.train.classes)
