"""Personalized training loop for one target client and the baselines it is
compared against (local-only, FedAvg, FedProx)."""

import csv
import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_simplex, check_unit_interval
from .em import EMConfig, run_em
from .exceptions import ParameterError
from .model import gradient, local_train, loss, predict
from .selection import select_neighbors
from .topology import TARGET_ID

METRIC_COLUMNS = ("round", "target_test_acc", "target_train_loss", "grad_norm_sq", "n_transmissions")


@dataclass
class RoundState:
    t: int
    target_model: object
    neighbor_models: dict
    weights: np.ndarray
    alpha: float


@dataclass
class Metrics:
    test_acc: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    n_transmissions: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    final_model: object = None
    selected_ids: tuple = ()
    weights: np.ndarray | None = None
    em_trace: np.ndarray | None = None

    @property
    def rounds(self):
        return len(self.test_acc)

    @property
    def max_test_acc(self):
        return max(self.test_acc) if self.test_acc else float("nan")

    def rows(self):
        for t in range(self.rounds):
            yield (t + 1, self.test_acc[t], self.train_loss[t], self.grad_norm_sq[t],
                   self.n_transmissions[t])

    def same_trajectory(self, other):
        """Bitwise equality of the learning series and final model (wall time and
        transmission counts are not compared)."""
        return all(
            np.array_equal(np.asarray(getattr(self, k)), np.asarray(getattr(other, k)))
            for k in ("test_acc", "train_loss", "grad_norm_sq")
        ) and np.array_equal(self.final_model.values, other.final_model.values)

    def write_csv(self, path, header_comment=None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRIC_COLUMNS)
            for t, acc, lo, g, n in self.rows():
                writer.writerow([t, repr(float(acc)), repr(float(lo)), repr(float(g)), int(n)])

    def summary(self):
        return {
            "rounds": self.rounds,
            "max_test_acc": float(self.max_test_acc),
            "final_test_acc": float(self.test_acc[-1]) if self.test_acc else None,
            "final_train_loss": float(self.train_loss[-1]) if self.train_loss else None,
            "selected_ids": list(self.selected_ids),
            "weights": None if self.weights is None else [float(w) for w in self.weights],
            "total_transmissions": int(sum(self.n_transmissions)),
        }


def evaluate(params, test):
    """Fraction of rows whose argmax prediction equals the label."""
    if len(test) == 0:
        raise ParameterError("cannot evaluate on an empty test set")
    return float(np.mean(predict(params, test.features) == test.labels))


def aggregate(target, neighbors, weights, alpha):
    """``alpha * target + (1 - alpha) * sum_m weights[m] * neighbors[m]``."""
    alpha = check_unit_interval(alpha, "alpha")
    if not neighbors or alpha == 1.0:
        return target.copy()
    pi = check_simplex(weights)
    if len(neighbors) != pi.size:
        raise ParameterError(f"{len(neighbors)} neighbor models but {pi.size} weights")
    for m in neighbors:
        if m.arch != target.arch:
            raise ParameterError("neighbor architecture differs from the target's")
    mixed = np.zeros_like(target.values)
    for w, m in zip(pi, neighbors):
        mixed += w * m.values
    return target.with_values(alpha * target.values + (1.0 - alpha) * mixed)


def _record(metrics, model, shard, config, n_tx, started):
    g = gradient(model, shard.train, l2=config.l2)
    metrics.test_acc.append(evaluate(model, shard.test))
    metrics.train_loss.append(loss(model, shard.train, l2=config.l2))
    metrics.grad_norm_sq.append(float(g @ g))
    metrics.n_transmissions.append(n_tx)
    metrics.wall_time.append(time.perf_counter() - started)


def _batch_rng(config, *keys):
    if config.batch_size is None:
        return None
    return np.random.default_rng([config.batch_seed, *keys])


def run_local(shard, train_config, T, init):
    """Target trains alone: ``T`` rounds of ``local_epochs`` gradient steps."""
    T = check_int(T, "T", minimum=1)
    rng = _batch_rng(train_config, TARGET_ID)
    model = init.copy()
    metrics = Metrics()
    for _ in range(T):
        started = time.perf_counter()
        model = local_train(model, shard.train, train_config, rng=rng)
        _record(metrics, model, shard, train_config, 0, started)
    metrics.final_model = model
    return metrics


def run_pfedwn(topology, channel_params, data_assignment, train_config, alpha=0.5, T=100, init=None,
               em_config=None, selection=None, neighbor_init=None, warmup_steps=20,
               neighbor_steps=1, refresh_em=False, drop_links=False, drop_rng=None, on_round=None):
    """Personalized training of the topology's target client.

    1. Neighbors with P_err below epsilon are selected (``selection`` may pass a
       precomputed :class:`~pfedwn.selection.SelectionResult`).
    2. Each selected neighbor trains ``warmup_steps`` on its own data and sends
       its model; EM on the target's training data yields the weights.
    3. Every round: each neighbor takes ``neighbor_steps`` local steps and sends
       its model, the target mixes models with weight ``alpha`` on its own,
       then runs its local steps.

    With ``refresh_em`` the weights are re-estimated each round from the latest
    neighbor models. With ``drop_links`` a neighbor's model is lost with
    probability equal to its P_err and the weights are renormalized over the
    models that arrived. ``on_round(t, model)`` sees the target model after
    every round.
    """
    T = check_int(T, "T", minimum=1)
    alpha = check_unit_interval(alpha, "alpha")
    if init is None:
        raise ParameterError("run_pfedwn needs an initial target model")
    em_config = em_config or EMConfig()
    if selection is None:
        selection = select_neighbors(topology, channel_params)
    selected = [i for i in selection.selected_ids if i in data_assignment]
    target_shard = data_assignment[topology.target.id]

    neighbor_models = {}
    neighbor_rngs = {}
    for m in selected:
        start = init if neighbor_init is None else neighbor_init[m]
        neighbor_rngs[m] = _batch_rng(train_config, m)
        neighbor_models[m] = local_train(start, data_assignment[m].train, train_config,
                                         rng=neighbor_rngs[m], steps=warmup_steps)

    metrics = Metrics(selected_ids=tuple(selected))
    pi = None
    if selected:
        result = run_em(target_shard.train, [neighbor_models[m] for m in selected], em_config)
        pi, metrics.em_trace = result.weights, result.trace
    metrics.weights = pi

    target_rng = _batch_rng(train_config, TARGET_ID)
    if drop_links and drop_rng is None:
        drop_rng = np.random.default_rng(0)
    model = init.copy()
    for t in range(T):
        started = time.perf_counter()
        if selected:
            for m in selected:
                neighbor_models[m] = local_train(neighbor_models[m], data_assignment[m].train,
                                                 train_config, rng=neighbor_rngs[m],
                                                 steps=neighbor_steps)
            received = list(selected)
            if drop_links:
                perr = selection.per_neighbor_perr
                received = [m for m in selected if drop_rng.random() >= perr.get(m, 0.0)]
            if refresh_em and t > 0:
                pi = run_em(target_shard.train, [neighbor_models[m] for m in selected],
                            em_config).weights
                metrics.weights = pi
            if received:
                w = np.array([pi[selected.index(m)] for m in received])
                if w.sum() > 0:
                    model = aggregate(model, [neighbor_models[m] for m in received], w / w.sum(), alpha)
        model = local_train(model, target_shard.train, train_config, rng=target_rng)
        _record(metrics, model, target_shard, train_config, len(selected), started)
        if on_round is not None:
            on_round(t, model)
    metrics.final_model = model
    return metrics


def _federated(shards, train_config, T, init, prox_mu):
    T = check_int(T, "T", minimum=1)
    if isinstance(shards, dict):
        shards = list(shards.values())
    if not shards:
        raise ParameterError("federated training needs at least one client")
    cfg = train_config
    if prox_mu != cfg.prox_mu:
        cfg = dataclasses.replace(cfg, prox_mu=prox_mu)
    sizes = np.array([len(s.train) for s in shards], dtype=np.float64)
    share = sizes / sizes.sum()
    rngs = [_batch_rng(cfg, s.client_id) for s in shards]
    out = {s.client_id: Metrics() for s in shards}
    global_model = init.copy()
    for _ in range(T):
        started = time.perf_counter()
        anchor = global_model if prox_mu else None
        locals_ = [local_train(global_model, s.train, cfg, rng=r, anchor=anchor)
                   for s, r in zip(shards, rngs)]
        values = np.zeros_like(global_model.values)
        for w, m in zip(share, locals_):
            values += w * m.values
        global_model = global_model.with_values(values)
        for s in shards:
            _record(out[s.client_id], global_model, s, cfg, len(shards), started)
    for s in shards:
        out[s.client_id].final_model = global_model
    return out


def run_fedavg(shards, train_config, T, init):
    """Sample-size weighted model averaging; per-client metrics of the global model."""
    return _federated(shards, train_config, T, init, prox_mu=0.0)


def run_fedprox(shards, train_config, prox_mu, T, init):
    """FedAvg whose local steps add ``prox_mu * (theta - theta_global)``."""
    if prox_mu < 0:
        raise ParameterError(f"prox_mu must be >= 0, got {prox_mu}")
    return _federated(shards, train_config, T, init, prox_mu=float(prox_mu))
