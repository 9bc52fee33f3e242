"""Experiment orchestration: build the scenario from a config, dispatch by
mode and write the artifacts."""

import json
import os

import numpy as np

from . import validate as oracles
from .analysis import gradient_norm_average, theorem1_condition
from .data import PartitionSpec, gen_synthetic, load_idx, make_client_shards
from .em import write_trace_csv
from .model import Arch, TrainConfig, init_params
from .pfl import run_fedavg, run_fedprox, run_local, run_pfedwn
from .seeding import stream
from .selection import select_neighbors, selection_sweep, write_sweep_csv
from .topology import TARGET_ID, build_topology
from .config import write_effective


class Scenario:
    """Everything a learning run needs, derived from one config."""

    def __init__(self, config):
        self.config = config
        seed = config.master_seed
        t = config.topology
        self.topology = build_topology(
            n_neighbors=t["n_neighbors"], density=t["density"], area=tuple(t["area"]),
            seed=int(stream(seed, "topology").integers(2 ** 31)), target_mode=t["target_mode"],
            target_position=t["target_position"], min_separation=config.channel["ref_distance"])
        self.channel = config.channel_params()
        self.dataset = self._dataset()
        ids = [TARGET_ID, *self.topology.neighbor_ids]
        spec = PartitionSpec(len(ids), config.data["dirichlet_alpha"],
                             seed=int(stream(seed, "data", 1).integers(2 ** 31)))
        self.shards = make_client_shards(self.dataset, spec, config.data["train_fraction"], ids)
        tr = config.train
        if tr["arch"] == "softmax":
            self.arch = Arch.softmax(self.dataset.dim, self.dataset.n_classes)
        else:
            self.arch = Arch.mlp(self.dataset.dim, self.dataset.n_classes, tr["hidden"])
        self.init = init_params(self.arch, stream(seed, "init"))
        self.train_config = TrainConfig(
            learning_rate=tr["learning_rate"], local_epochs=tr["local_epochs"],
            batch_size=tr["batch_size"], l2=tr["l2"],
            batch_seed=int(stream(seed, "training").integers(2 ** 31)))

    def _dataset(self):
        d = self.config.data
        if d["source"] == "idx":
            return load_idx(d["images_path"], d["labels_path"], n_classes=d["n_classes"])
        return gen_synthetic(d["n_classes"], d["dim"], d["per_class_count"], d["cluster_spread"],
                             seed=int(stream(self.config.master_seed, "data", 0).integers(2 ** 31)))

    def selection(self):
        return select_neighbors(self.topology, self.channel)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _diagnostics(config, metrics):
    tr = config.train
    out = {}
    g = gradient_norm_average(metrics)
    out["grad_norm_running_avg_final"] = float(g[-1])
    if len(g) >= 10:
        out["grad_norm_running_avg_at_10"] = float(g[9])
    if tr["l2"] > 0 and tr["learning_rate"] * tr["l2"] < 1:
        # the L2 coefficient lower-bounds the strong-convexity constant
        value, holds = theorem1_condition(tr["alpha"], tr["learning_rate"], tr["l2"], tr["local_epochs"])
        out["contraction_condition_value"] = value
        out["contraction_condition_holds"] = holds
    return out


def _learning(config, out_dir):
    sc = Scenario(config)
    tr, mode, header = config.train, config.mode, config.header()
    written = []
    selection = sc.selection()
    if mode == "pfedwn":
        metrics = run_pfedwn(sc.topology, sc.channel, sc.shards, sc.train_config, alpha=tr["alpha"],
                             T=tr["rounds"], init=sc.init, em_config=config.em_config(),
                             selection=selection, warmup_steps=tr["warmup_steps"],
                             refresh_em=tr["refresh_em"], drop_links=tr["drop_links"],
                             drop_rng=stream(config.master_seed, "drops"))
        if metrics.em_trace is not None:
            path = os.path.join(out_dir, "pi_trace.csv")
            write_trace_csv(metrics.em_trace, path, header)
            written.append(path)
    elif mode == "local":
        metrics = run_local(sc.shards[TARGET_ID], sc.train_config, tr["rounds"], sc.init)
    else:
        shards = [sc.shards[TARGET_ID]] + [sc.shards[m] for m in selection.selected_ids]
        if mode == "fedavg":
            per_client = run_fedavg(shards, sc.train_config, tr["rounds"], sc.init)
        else:
            per_client = run_fedprox(shards, sc.train_config, tr["prox_mu"], tr["rounds"], sc.init)
        metrics = per_client[TARGET_ID]
    path = os.path.join(out_dir, "metrics.csv")
    metrics.write_csv(path, header)
    written.append(path)
    if tr["save_model"]:
        path = os.path.join(out_dir, "model.bin")
        with open(path, "wb") as fh:
            fh.write(metrics.final_model.to_bytes())
        written.append(path)
    summary = metrics.summary()
    summary.update(
        mode=mode, config_hash=config.config_hash, seed=config.master_seed,
        per_neighbor_perr={str(k): v for k, v in sorted(selection.per_neighbor_perr.items())},
        arch=sc.arch.to_dict(), diagnostics=_diagnostics(config, metrics), config=config.doc)
    return summary, written


def _sweep(config, out_dir):
    s = config.sweep
    grid = {k: s[k] for k in ("gamma_th", "epsilon", "density", "n_subchannels")}
    rows = selection_sweep(grid, s["replications"], config.master_seed, params=config.channel_params(),
                           area=tuple(config.topology["area"]))
    path = os.path.join(out_dir, "sweep.csv")
    write_sweep_csv(rows, path, config.header())
    summary = {"mode": config.mode, "config_hash": config.config_hash, "seed": config.master_seed,
               "grid_points": len(rows), "config": config.doc}
    return summary, [path]


def _validate(config, out_dir):
    v = config.validate
    results = oracles.run_all(mc_samples=v["mc_samples"], layouts=v["layouts"],
                              perr_tolerance=v["perr_tolerance"], grad_probes=v["grad_probes"],
                              grad_tolerance=v["grad_tolerance"], moment_tolerance=v["moment_tolerance"],
                              master_seed=config.master_seed)
    summary = {"mode": config.mode, "config_hash": config.config_hash, "seed": config.master_seed,
               "suites": [r.to_dict() for r in results], "all_passed": all(r.passed for r in results),
               "config": config.doc}
    return summary, [], results


def run(config, echo=print):
    """Execute ``config``; returns ``(summary, results)`` where ``results`` is
    the list of oracle suites for ``validate`` and ``None`` otherwise."""
    out_dir = config.output_dir
    write_effective(config, out_dir)
    results = None
    if config.mode == "channel-sweep":
        summary, written = _sweep(config, out_dir)
    elif config.mode == "validate":
        summary, written, results = _validate(config, out_dir)
        for r in results:
            echo(r.line())
    else:
        summary, written = _learning(config, out_dir)
    summary["files"] = sorted(os.path.basename(p) for p in written)
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary, results


def metrics_array(path):
    """Load a CSV written by a run (metrics or sweep) as a structured array.

    The leading ``# config_hash=...`` line is dropped first; with
    ``names=True`` numpy would otherwise take the field names from it.
    """
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return np.genfromtxt(lines, delimiter=",", names=True)
