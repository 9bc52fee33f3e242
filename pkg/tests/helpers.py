"""Shared fixture builders for the learning and convergence tests."""

import numpy as np

from pfedwn.analysis import oracle_optimum
from pfedwn.data import ClientShard, Dataset, PartitionSpec, dirichlet_partition, gen_synthetic, make_client_shards, split
from pfedwn.model import Arch, TrainConfig, init_params
from pfedwn.selection import SelectionResult
from pfedwn.topology import build_topology


def all_selected(ids):
    ids = tuple(sorted(ids))
    return SelectionResult(ids, {i: 0.0 for i in ids}, gamma_th=10.0, epsilon=0.05)


def blobs(rng, means, counts, spread):
    labels = np.repeat(np.arange(len(counts)), counts)
    x = means[labels] + spread * rng.standard_normal((len(labels), means.shape[1]))
    return Dataset(x, labels, len(counts))


def twin_fixture(seed, n_classes=10, dim=10, spread=1.0, per_class=150, target_train=20,
                 target_test=200, dirichlet_alpha=0.1):
    """Four neighbors from a Dirichlet label-skew partition plus a target that
    draws a small shard with neighbor 1's class proportions.

    The target's test split is kept large so the accuracy estimate is not
    dominated by a handful of rows. Features are standardized with statistics
    pooled over all training splits.
    """
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_classes, dim))
    pool = blobs(rng, means, [per_class] * n_classes, spread)
    parts = dirichlet_partition(pool, PartitionSpec(4, dirichlet_alpha, seed=seed), min_size=2)
    q = np.bincount(pool.labels[parts[0]], minlength=n_classes) / len(parts[0])
    raw = {0: (blobs(rng, means, rng.multinomial(target_train, q), spread),
               blobs(rng, means, rng.multinomial(target_test, q), spread))}
    for k, p in enumerate(parts):
        raw[k + 1] = split(pool.subset(p), 0.75, seed=seed + k)
    x = np.vstack([tr.features for tr, _ in raw.values()])
    mu, sd = x.mean(axis=0), x.std(axis=0)

    def scale(d):
        return Dataset((d.features - mu) / sd, d.labels, n_classes)

    shards = {i: ClientShard(i, scale(tr), scale(te)) for i, (tr, te) in raw.items()}
    return shards, Arch.softmax(dim, n_classes)


def convex_fixture(seed, eta=0.5, oracle_steps=1000):
    """Softmax + L2 0.1 target whose three neighbors already sit at the
    target's optimum (they hold the target's training data)."""
    ds = gen_synthetic(4, 5, 100, cluster_spread=1.0, seed=seed)
    shard = make_client_shards(ds, PartitionSpec(1, 0.1, seed=seed))[0]
    shards = {i: ClientShard(i, shard.train, shard.test) for i in range(4)}
    arch = Arch.softmax(5, 4)
    init = init_params(arch)
    cfg = TrainConfig(learning_rate=eta, l2=0.1)
    opt = oracle_optimum(init, shard.train, cfg, oracle_steps)
    return shards, init, cfg, opt


def heterogeneous_convex_fixture(seed, eta=0.5, oracle_steps=1000):
    """As :func:`convex_fixture` but every client holds its own Dirichlet shard
    and each neighbor starts at its own optimum."""
    ds = gen_synthetic(4, 5, 100, cluster_spread=1.0, seed=seed)
    shards = make_client_shards(ds, PartitionSpec(4, 0.5, seed=seed))
    arch = Arch.softmax(5, 4)
    init = init_params(arch)
    cfg = TrainConfig(learning_rate=eta, l2=0.1)
    nb = {m: oracle_optimum(init, shards[m].train, cfg, oracle_steps) for m in (1, 2, 3)}
    return shards, init, cfg, nb


def mlp_fixture(seed, hidden=16):
    ds = gen_synthetic(4, 6, 80, cluster_spread=1.5, seed=seed)
    shards = make_client_shards(ds, PartitionSpec(4, 0.5, seed=seed))
    arch = Arch.mlp(6, 4, hidden=hidden)
    return shards, init_params(arch, np.random.default_rng(seed))


def small_topology(n_neighbors=3, seed=0):
    return build_topology(n_neighbors=n_neighbors, seed=seed)
