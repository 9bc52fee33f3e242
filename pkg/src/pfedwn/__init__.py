"""Channel-aware personalized federated learning over D2D wireless links.

Neighbors of a target client are selected by their transmission-error
probability under interference, aggregation weights come from an EM mixture
fit on the target's data, and the target mixes the selected models into its
own each round.
"""

from .channel import ChannelParams, link_budget, mc_transmission_error, transmission_error_prob
from .config import ExperimentConfig, parse_config
from .data import ClientShard, Dataset, PartitionSpec, gen_synthetic, load_idx, make_client_shards
from .em import EMConfig, run_em
from .estimators import MixtureWeightEstimator, SoftmaxRegression, TanhMLPClassifier
from .model import Arch, ModelParams, TrainConfig, init_params, local_train
from .pfl import Metrics, run_fedavg, run_fedprox, run_local, run_pfedwn
from .selection import SelectionResult, select_neighbors, selection_sweep
from .topology import Topology, build_topology

__version__ = "0.1.0"

__all__ = [
    "Arch", "ChannelParams", "ClientShard", "Dataset", "EMConfig", "ExperimentConfig", "Metrics",
    "MixtureWeightEstimator", "ModelParams", "PartitionSpec", "SelectionResult", "SoftmaxRegression",
    "TanhMLPClassifier", "Topology", "TrainConfig", "build_topology", "gen_synthetic", "init_params",
    "link_budget", "load_idx", "local_train", "make_client_shards", "mc_transmission_error",
    "parse_config", "run_em", "run_fedavg", "run_fedprox", "run_local", "run_pfedwn",
    "select_neighbors", "selection_sweep", "transmission_error_prob",
]
