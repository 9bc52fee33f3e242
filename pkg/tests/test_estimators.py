import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from pfedwn.data import gen_synthetic
from pfedwn.em import run_em
from pfedwn.estimators import MixtureWeightEstimator, SoftmaxRegression, TanhMLPClassifier
from pfedwn.model import Arch, TrainConfig, init_params, local_train


@pytest.fixture(scope="module")
def blobs():
    d = gen_synthetic(3, 4, 60, cluster_spread=0.5, seed=0, means=3 * np.eye(3, 4))
    return d.features, d.labels


def test_params_and_clone():
    est = SoftmaxRegression(learning_rate=0.3, n_steps=50)
    assert est.get_params()["learning_rate"] == 0.3
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    assert TanhMLPClassifier(hidden=7).set_params(n_steps=3).n_steps == 3


@pytest.mark.parametrize("est", [SoftmaxRegression(learning_rate=0.5), TanhMLPClassifier(hidden=8, learning_rate=0.5)])
def test_fit_predict(blobs, est):
    X, y = blobs
    est.fit(X, y)
    assert est.score(X, y) > 0.95
    proba = est.predict_proba(X)
    assert proba.shape == (len(X), 3) and np.allclose(proba.sum(axis=1), 1)
    assert np.array_equal(est.predict(X), est.classes_[proba.argmax(axis=1)])


def test_string_labels_and_pipeline(blobs):
    X, y = blobs
    names = np.array(["a", "b", "c"])[y]
    pipe = make_pipeline(StandardScaler(), SoftmaxRegression(learning_rate=0.5))
    assert set(pipe.fit(X, names).predict(X)) <= {"a", "b", "c"}
    assert cross_val_score(pipe, X, names, cv=3).mean() > 0.9


def test_matches_functional_training(blobs):
    X, y = blobs
    est = SoftmaxRegression(learning_rate=0.2, n_steps=30).fit(X, y)
    from pfedwn.data import Dataset
    ref = local_train(init_params(Arch.softmax(4, 3)), Dataset(X, y, 3), TrainConfig(learning_rate=0.2, local_epochs=30))
    assert np.allclose(est.params_.values, ref.values)


def test_unfitted_raises(blobs):
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        SoftmaxRegression().predict(blobs[0])


def test_mixture_weights(blobs):
    X, y = blobs
    from pfedwn.data import Dataset
    arch = Arch.softmax(4, 3)
    cfg = TrainConfig(learning_rate=0.5, local_epochs=200)
    good = local_train(init_params(arch), Dataset(X, y, 3), cfg)
    bad = local_train(init_params(arch), Dataset(X, (y + 1) % 3, 3), cfg)
    est = MixtureWeightEstimator(components=[bad, good]).fit(X, y)
    assert est.weights_[1] > 0.9
    assert np.allclose(est.weights_, run_em(Dataset(X, y, 3), [bad, good]).weights)
    assert est.trace_.shape[1] == 2 and est.n_iter_ >= 1
    scores = est.score_samples(X, y)
    assert scores.shape == (len(X),) and np.all(scores <= 1e-12)
    with pytest.raises(ValueError):
        MixtureWeightEstimator().fit(X, y)
