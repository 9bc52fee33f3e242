"""Channel-aware neighbor selection and the selection-count sweeps."""

import csv
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int
from .channel import ChannelParams, link_budget, transmission_error_prob
from .seeding import stream
from .topology import build_topology

SWEEP_COLUMNS = ("gamma_th", "epsilon", "density", "n_subchannels", "mean_selected", "stderr",
                 "replications")


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: tuple
    per_neighbor_perr: dict = field(default_factory=dict)
    gamma_th: float = 0.0
    epsilon: float = 0.0

    @property
    def count(self):
        return len(self.selected_ids)


def error_probabilities(topology, params):
    """P_err for every neighbor, with all other neighbors interfering."""
    return {
        n.id: transmission_error_prob(link_budget(topology, params, n.id), params)
        for n in topology.neighbors
    }


def select_from_perr(perr, epsilon, gamma_th=float("nan")):
    selected = tuple(sorted(i for i, p in perr.items() if p < epsilon))
    return SelectionResult(selected_ids=selected, per_neighbor_perr=dict(perr),
                           gamma_th=gamma_th, epsilon=epsilon)


def select_neighbors(topology, params):
    """Keep neighbors whose transmission-error probability is strictly below
    ``params.epsilon``."""
    perr = error_probabilities(topology, params)
    return select_from_perr(perr, params.epsilon, params.gamma_th)


def n_workers():
    """Worker cap from ``PFEDWN_THREADS``; serial when unset."""
    try:
        return max(1, int(os.environ.get("PFEDWN_THREADS", "1")))
    except ValueError:
        return 1


def _replicate(args):
    params, density, rep, master_seed, area, gammas, epsilons, subchannels = args
    seed = int(stream(master_seed, "topology", rep).integers(2 ** 31))
    # the same layout serves every gamma/epsilon/|F| point of this replication
    topo = build_topology(density=density, area=area, seed=seed,
                          min_separation=params.ref_distance)
    counts = {}
    for g, f in itertools.product(gammas, subchannels):
        perr = error_probabilities(topo, params.replace(gamma_th=g, n_subchannels=f))
        for e in epsilons:
            counts[(g, e, f)] = sum(p < e for p in perr.values())
    return counts


def selection_sweep(grid, replications, master_seed, params=None, area=(50.0, 50.0), workers=None):
    """Average selected-neighbor counts over a grid of gamma_th, epsilon,
    PPP density and sub-channel count.

    ``grid`` maps ``gamma_th``, ``epsilon``, ``density`` and ``n_subchannels``
    to lists; missing keys fall back to the value in ``params``. Replication
    ``r`` at a given density uses the same topology for every other grid value.
    Returns one dict per grid point with the :data:`SWEEP_COLUMNS` keys.
    """
    params = params or ChannelParams()
    replications = check_int(replications, "replications", minimum=1)
    gammas = list(grid.get("gamma_th", [params.gamma_th]))
    epsilons = list(grid.get("epsilon", [params.epsilon]))
    densities = list(grid.get("density", [1e-3]))
    subchannels = list(grid.get("n_subchannels", [params.n_subchannels]))

    jobs = [(params, d, r, master_seed + 7919 * k, tuple(area), gammas, epsilons, subchannels)
            for k, d in enumerate(densities) for r in range(replications)]
    workers = workers or n_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]

    rows = []
    for k, d in enumerate(densities):
        reps = results[k * replications:(k + 1) * replications]
        for g, e, f in itertools.product(gammas, epsilons, subchannels):
            c = np.array([rep[(g, e, f)] for rep in reps], dtype=np.float64)
            se = float(c.std(ddof=1) / math.sqrt(len(c))) if len(c) > 1 else 0.0
            rows.append({"gamma_th": g, "epsilon": e, "density": d, "n_subchannels": f,
                         "mean_selected": float(c.mean()), "stderr": se,
                         "replications": replications})
    return rows


def write_sweep_csv(rows, path, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
