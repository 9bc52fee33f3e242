"""Mixture-weight estimation over the selected neighbors.

The target's data is modelled as a mixture of the neighbors' distributions.
EM alternates posterior responsibilities (E-step) with weight and, optionally,
component-model updates (M-step); the weights then drive aggregation.
"""

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from ._validation import check_int, check_simplex
from .exceptions import NumericalError, ParameterError
from .model import TrainConfig, local_train, per_sample_loss


@dataclass
class EMState:
    weights: np.ndarray
    responsibilities: np.ndarray
    component_models: list
    iteration: int = 0


@dataclass(frozen=True)
class EMConfig:
    max_iter: int = 50
    tol: float = 1e-4
    update_models: bool = False
    inner_steps: int = 50
    inner_lr: float = 0.1
    l2: float = 0.0

    def __post_init__(self):
        check_int(self.max_iter, "max_iter", minimum=1)
        check_int(self.inner_steps, "inner_steps", minimum=0)
        if not self.tol >= 0:
            raise ParameterError("tol must be >= 0")


class EMResult(NamedTuple):
    weights: np.ndarray
    trace: np.ndarray
    state: EMState


def e_step(losses, weights):
    """Responsibilities ``lam[i, m] ~ pi[m] * exp(-losses[i, m])``, row-normalized.

    Computed in log space with a per-row max shift. Components with zero prior
    weight get exactly zero responsibility.
    """
    losses = np.asarray(losses, dtype=np.float64)
    pi = check_simplex(weights)
    if losses.ndim != 2 or losses.shape[1] != pi.size:
        raise ParameterError(f"losses must be (k, {pi.size}), got {losses.shape}")
    if not np.all(np.isfinite(losses)):
        raise ParameterError("losses must be finite")
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.clip(pi, 0.0, None))
    log_joint = log_pi[None, :] - losses
    row_max = log_joint.max(axis=1, keepdims=True)
    if np.any(~np.isfinite(row_max)):
        raise NumericalError("a responsibility row has no mass")
    lam = np.exp(log_joint - row_max)
    return lam / lam.sum(axis=1, keepdims=True)


def m_step_weights(responsibilities):
    lam = np.asarray(responsibilities, dtype=np.float64)
    if lam.ndim != 2 or lam.shape[0] == 0:
        raise ParameterError("responsibilities must be a non-empty (k, M) matrix")
    return lam.mean(axis=0)


def m_step_models(responsibilities, target_train, component_models, inner_config):
    """Advance each component by gradient steps on its responsibility-weighted loss.

    ``inner_config`` is either an :class:`EMConfig` (uses ``inner_steps`` and
    ``inner_lr``) or a :class:`~pfedwn.model.TrainConfig` (uses its
    ``local_epochs`` and ``learning_rate``).
    """
    lam = np.asarray(responsibilities, dtype=np.float64)
    if isinstance(inner_config, EMConfig):
        cfg = TrainConfig(learning_rate=inner_config.inner_lr, local_epochs=max(1, inner_config.inner_steps),
                          l2=inner_config.l2)
        steps = inner_config.inner_steps
    else:
        cfg, steps = inner_config, inner_config.local_epochs
    out = []
    for m, model in enumerate(component_models):
        if not np.any(lam[:, m]):
            out.append(model.copy())
            continue
        out.append(local_train(model, target_train, cfg, sample_weight=lam[:, m], steps=steps))
    return out


def loss_matrix(component_models, dataset):
    return np.column_stack([per_sample_loss(m, dataset) for m in component_models])


def elbo(losses, weights, responsibilities):
    """Evidence lower bound with log p(y|x) = -loss (normalizing constant dropped)."""
    lam = np.asarray(responsibilities, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(weights, dtype=np.float64))
    mask = lam > 0
    joint = np.where(mask, lam * (log_pi[None, :] - losses), 0.0)
    entropy = -np.sum(lam[mask] * np.log(lam[mask]))
    return float(joint.sum() + entropy)


def log_likelihood(losses, weights):
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(weights, dtype=np.float64))
    return float(logsumexp(log_pi[None, :] - losses, axis=1).sum())


def run_em(target_train, neighbor_models, config=None, prior=None, callback=None):
    """Estimate aggregation weights for ``neighbor_models`` on the target's data.

    Starts from a uniform prior (or ``prior``), stops once the L1 change of the
    weights drops below ``config.tol`` or after ``config.max_iter`` iterations.
    The returned trace has the prior as row 0 and one row per iteration.
    ``callback(state, losses)`` is invoked after every iteration.
    """
    config = config or EMConfig()
    if len(neighbor_models) < 1:
        raise ParameterError("EM needs at least one component")
    models = [m.copy() for m in neighbor_models]
    M = len(models)
    pi = np.full(M, 1.0 / M) if prior is None else check_simplex(prior).copy()
    trace = [pi.copy()]
    state = EMState(pi, np.full((len(target_train), M), 1.0 / M), models, 0)
    for t in range(1, config.max_iter + 1):
        losses = loss_matrix(models, target_train)
        lam = e_step(losses, pi)
        new_pi = m_step_weights(lam)
        if config.update_models:
            models = m_step_models(lam, target_train, models, config)
        change = float(np.abs(new_pi - pi).sum())
        pi = new_pi
        trace.append(pi.copy())
        state = EMState(pi, lam, models, t)
        if callback is not None:
            callback(state, losses)
        if change < config.tol:
            break
    return EMResult(pi, np.array(trace), state)


def write_trace_csv(trace, path, header_comment=None):
    trace = np.asarray(trace)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration"] + [f"pi_{m}" for m in range(trace.shape[1])])
        for t, row in enumerate(trace):
            writer.writerow([t] + [repr(float(v)) for v in row])
