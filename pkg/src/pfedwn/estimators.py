"""scikit-learn compatible wrappers around the learners and the EM weighting.

These let the desk-scale models drop into pipelines, ``cross_val_score`` and
``clone``; the federated loops use the functional API in :mod:`pfedwn.model`.
"""

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted

from ._validation import check_array, check_X_y
from .data import Dataset
from .em import EMConfig, run_em
from .model import Arch, ModelParams, TrainConfig, init_params, local_train, logits, per_sample_loss


class _GradientClassifier(ClassifierMixin, BaseEstimator):

    def _arch(self, dim, n_classes):
        raise NotImplementedError

    def _dataset(self, X, y):
        return Dataset(X, np.searchsorted(self.classes_, y), len(self.classes_))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        n_classes = max(2, len(self.classes_))
        if len(self.classes_) < 2:
            # keep a two-column model so predict_proba stays well formed
            self.classes_ = np.append(self.classes_, self.classes_[0] + 1)
        arch = self._arch(X.shape[1], n_classes)
        rng = np.random.default_rng(self.random_state)
        init = init_params(arch, rng)
        cfg = TrainConfig(learning_rate=self.learning_rate, local_epochs=self.n_steps,
                          batch_size=self.batch_size, l2=self.l2)
        self.params_ = local_train(init, self._dataset(X, y), cfg, rng=rng)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return logits(self.params_, check_array(X, dtype=np.float64))

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class SoftmaxRegression(_GradientClassifier):
    """Multinomial logistic regression trained by plain gradient descent."""

    def __init__(self, learning_rate=0.1, n_steps=200, l2=0.0, batch_size=None, random_state=0):
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.l2 = l2
        self.batch_size = batch_size
        self.random_state = random_state

    def _arch(self, dim, n_classes):
        return Arch.softmax(dim, n_classes)


class TanhMLPClassifier(_GradientClassifier):
    """One hidden tanh layer, softmax output, gradient descent."""

    def __init__(self, hidden=32, learning_rate=0.1, n_steps=200, l2=0.0, batch_size=None,
                 random_state=0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.l2 = l2
        self.batch_size = batch_size
        self.random_state = random_state

    def _arch(self, dim, n_classes):
        return Arch.mlp(dim, n_classes, self.hidden)


class MixtureWeightEstimator(BaseEstimator):
    """Estimate how much each component model explains a client's data.

    ``components`` is a list of :class:`~pfedwn.model.ModelParams` (e.g. the
    models received from neighbors). ``fit(X, y)`` runs EM on the labelled
    sample (labels must already be class indices) and exposes ``weights_``,
    ``trace_``, ``responsibilities_`` and ``n_iter_``.
    """

    def __init__(self, components=None, max_iter=50, tol=1e-4, update_models=False,
                 inner_steps=50, inner_lr=0.1):
        self.components = components
        self.max_iter = max_iter
        self.tol = tol
        self.update_models = update_models
        self.inner_steps = inner_steps
        self.inner_lr = inner_lr

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        comps = list(self.components or [])
        if not comps or not all(isinstance(c, ModelParams) for c in comps):
            raise ValueError("components must be a non-empty list of ModelParams")
        data = Dataset(X, y.astype(np.int64), comps[0].arch.n_classes)
        cfg = EMConfig(max_iter=self.max_iter, tol=self.tol, update_models=self.update_models,
                       inner_steps=self.inner_steps, inner_lr=self.inner_lr)
        result = run_em(data, comps, cfg)
        self.weights_ = result.weights
        self.trace_ = result.trace
        self.responsibilities_ = result.state.responsibilities
        self.components_ = result.state.component_models
        self.n_iter_ = result.state.iteration
        return self

    def score_samples(self, X, y):
        """Per-row mixture log-likelihood under the fitted weights."""
        check_is_fitted(self, "weights_")
        X, y = check_X_y(X, y, dtype=np.float64)
        data = Dataset(X, y.astype(np.int64), self.components_[0].arch.n_classes)
        losses = np.column_stack([per_sample_loss(m, data) for m in self.components_])
        with np.errstate(divide="ignore"):
            lp = np.log(self.weights_)[None, :] - losses
        top = lp.max(axis=1, keepdims=True)
        return (top + np.log(np.exp(lp - top).sum(axis=1, keepdims=True)))[:, 0]
