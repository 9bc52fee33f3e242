"""Desk-scale learners on flat parameter vectors.

Two architectures: multinomial logistic regression (``softmax``) and a
one-hidden-layer tanh perceptron (``mlp``). Parameters live in one float64
vector so aggregation and distance computations stay trivial.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from ._validation import check_int, check_positive
from .exceptions import NumericalError, ParameterError


@dataclass(frozen=True)
class Arch:
    kind: str
    dim: int
    n_classes: int
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in ("softmax", "mlp"):
            raise ParameterError(f"unknown architecture {self.kind!r}")
        check_int(self.dim, "dim", minimum=1)
        check_int(self.n_classes, "n_classes", minimum=2)
        if self.kind == "mlp":
            check_int(self.hidden, "hidden", minimum=1)

    @property
    def n_params(self):
        d, c, h = self.dim, self.n_classes, self.hidden
        if self.kind == "softmax":
            return d * c + c
        return d * h + h + h * c + c

    def to_dict(self):
        out = {"kind": self.kind, "dim": self.dim, "n_classes": self.n_classes}
        if self.kind == "mlp":
            out["hidden"] = self.hidden
        return out

    @classmethod
    def softmax(cls, dim, n_classes):
        return cls("softmax", dim, n_classes)

    @classmethod
    def mlp(cls, dim, n_classes, hidden=32):
        return cls("mlp", dim, n_classes, hidden)


@dataclass
class ModelParams:
    arch: Arch
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.arch.n_params,):
            raise ParameterError(
                f"{self.arch.kind} expects {self.arch.n_params} parameters, got {self.values.shape}")

    def copy(self):
        return ModelParams(self.arch, self.values.copy())

    def with_values(self, values):
        return ModelParams(self.arch, values)

    def to_bytes(self):
        return self.values.astype("<f8").tobytes()

    def arch_json(self):
        return json.dumps(self.arch.to_dict(), sort_keys=True)

    @classmethod
    def from_bytes(cls, arch_json, blob):
        arch = Arch(**json.loads(arch_json))
        return cls(arch, np.frombuffer(blob, dtype="<f8").astype(np.float64))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    local_epochs: int = 1
    batch_size: int | None = None
    batch_seed: int = 0
    l2: float = 0.0
    # FedProx proximal coefficient; only the federated baselines set it
    prox_mu: float = field(default=0.0)

    def __post_init__(self):
        check_positive(self.learning_rate, "learning_rate", strict=False)
        check_int(self.local_epochs, "local_epochs", minimum=1)
        check_positive(self.l2, "l2", strict=False)
        check_positive(self.prox_mu, "prox_mu", strict=False)
        if self.batch_size is not None:
            check_int(self.batch_size, "batch_size", minimum=1)


def init_params(arch, rng=None, scale=None):
    """Zeros for softmax; scaled Gaussian weights (zero biases) for the MLP,
    which would otherwise never break hidden-unit symmetry."""
    if arch.kind == "softmax":
        return ModelParams(arch, np.zeros(arch.n_params))
    if rng is None:
        raise ParameterError("MLP initialization needs a random generator")
    d, h, c = arch.dim, arch.hidden, arch.n_classes
    s1 = scale if scale is not None else 1.0 / np.sqrt(d)
    s2 = scale if scale is not None else 1.0 / np.sqrt(h)
    w1 = rng.standard_normal((d, h)) * s1
    w2 = rng.standard_normal((h, c)) * s2
    return ModelParams(arch, np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(c)]))


def _unpack(arch, v):
    d, c, h = arch.dim, arch.n_classes, arch.hidden
    if arch.kind == "softmax":
        return v[:d * c].reshape(d, c), v[d * c:]
    i = 0
    w1 = v[i:i + d * h].reshape(d, h); i += d * h
    b1 = v[i:i + h]; i += h
    w2 = v[i:i + h * c].reshape(h, c); i += h * c
    return w1, b1, w2, v[i:i + c]


def _check_dims(params, X):
    if X.ndim != 2 or X.shape[1] != params.arch.dim:
        raise ParameterError(f"expected {params.arch.dim} features, got shape {X.shape}")


def logits(params, X):
    X = np.asarray(X, dtype=np.float64)
    _check_dims(params, X)
    if params.arch.kind == "softmax":
        w, b = _unpack(params.arch, params.values)
        return X @ w + b
    w1, b1, w2, b2 = _unpack(params.arch, params.values)
    return np.tanh(X @ w1 + b1) @ w2 + b2


def predict(params, X):
    # argmax keeps the lowest class index on ties
    return np.argmax(logits(params, X), axis=1)


def per_sample_loss(params, dataset):
    """Cross-entropy of every row, -log p(y | x)."""
    logp = log_softmax(logits(params, dataset.features), axis=1)
    return -logp[np.arange(len(dataset)), dataset.labels]


def _sample_weights(n, sample_weight):
    if sample_weight is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (n,):
        raise ParameterError(f"sample_weight must have shape ({n},)")
    return w / n


def loss(params, dataset, l2=0.0, sample_weight=None):
    """Mean cross-entropy (optionally per-row weighted) plus ``l2/2 * |theta|^2``."""
    if len(dataset) == 0:
        raise ParameterError("loss of an empty dataset is undefined")
    w = _sample_weights(len(dataset), sample_weight)
    value = float(w @ per_sample_loss(params, dataset))
    if l2:
        value += 0.5 * l2 * float(params.values @ params.values)
    return value


def gradient(params, dataset, l2=0.0, sample_weight=None):
    """Analytic gradient of :func:`loss`, same arguments."""
    if len(dataset) == 0:
        raise ParameterError("gradient of an empty dataset is undefined")
    X = dataset.features
    _check_dims(params, X)
    n, arch = len(dataset), params.arch
    w = _sample_weights(n, sample_weight)
    onehot = np.zeros((n, arch.n_classes))
    onehot[np.arange(n), dataset.labels] = 1.0

    if arch.kind == "softmax":
        W, b = _unpack(arch, params.values)
        delta = (softmax(X @ W + b, axis=1) - onehot) * w[:, None]
        grad = np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])
    else:
        W1, b1, W2, b2 = _unpack(arch, params.values)
        hidden = np.tanh(X @ W1 + b1)
        delta = (softmax(hidden @ W2 + b2, axis=1) - onehot) * w[:, None]
        dz = (delta @ W2.T) * (1.0 - hidden * hidden)
        grad = np.concatenate([(X.T @ dz).ravel(), dz.sum(axis=0),
                               (hidden.T @ delta).ravel(), delta.sum(axis=0)])
    if l2:
        grad = grad + l2 * params.values
    return grad


def central_differences(f, theta, h=1e-5):
    """Central-difference gradient of a scalar function of a vector."""
    check_positive(h, "h")
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        out[i] = (f(theta + step) - f(theta - step)) / (2.0 * h)
    return out


def finite_diff_grad(params, dataset, h=1e-5, l2=0.0, sample_weight=None):
    def f(v):
        return loss(params.with_values(v), dataset, l2=l2, sample_weight=sample_weight)

    return central_differences(f, params.values, h)


def _batches(n, config, rng):
    if config.batch_size is None or config.batch_size >= n:
        while True:
            yield None
    while True:
        yield rng.choice(n, size=config.batch_size, replace=False)


def local_train(params, train, config, rng=None, anchor=None, sample_weight=None, steps=None):
    """Run ``config.local_epochs`` gradient steps (or ``steps`` if given).

    Full batch unless ``config.batch_size`` is set, in which case each step
    draws a minibatch from ``rng`` (default: ``default_rng(config.batch_seed)``).
    ``anchor`` adds the proximal pull ``prox_mu * (theta - anchor)``.
    """
    steps = config.local_epochs if steps is None else steps
    eta = config.learning_rate
    if eta == 0 or steps == 0:
        return params.copy()
    if config.batch_size is not None and rng is None:
        rng = np.random.default_rng(config.batch_seed)
    theta = params.values.copy()
    batches = _batches(len(train), config, rng)
    for step in range(steps):
        idx = next(batches)
        data = train if idx is None else train.subset(idx)
        sw = sample_weight if idx is None or sample_weight is None else np.asarray(sample_weight)[idx]
        g = gradient(params.with_values(theta), data, l2=config.l2, sample_weight=sw)
        if anchor is not None and config.prox_mu:
            g = g + config.prox_mu * (theta - anchor.values)
        theta = theta - eta * g
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"local training diverged at step {step}", step=step)
    return params.with_values(theta)
