"""Experiment configuration: JSON schema, defaults, parsing and hashing."""

import copy
import dataclasses
import hashlib
import json
import os

import jsonschema

from .channel import ChannelParams
from .em import EMConfig
from .exceptions import ConfigError

MODES = ("pfedwn", "local", "fedavg", "fedprox", "channel-sweep", "validate")

DEFAULTS = {
    "mode": "pfedwn",
    "master_seed": 0,
    "output_dir": "out",
    "topology": {
        "n_neighbors": 10,
        "density": None,
        "area": [50.0, 50.0],
        "target_mode": "center",
        "target_position": None,
    },
    "channel": {
        "n_subchannels": 14,
        "rayleigh_factor": 2.0,
        "pathloss_exponent": 3.0,
        "ref_distance": 1.0,
        "tx_power": 0.2,
        "frequency": 2.4e9,
        "boltzmann": 1.38e-23,
        "noise_temp": 290.0,
        "bandwidth": 1e8,
        "fading_threshold": 2.0,
        "gamma_th": 10.0,
        "epsilon": 0.05,
        "conditioned": False,
        "tx_power_overrides": {},
        "fading_threshold_overrides": {},
    },
    "data": {
        "source": "synthetic",
        "n_classes": 10,
        "dim": 20,
        "per_class_count": 200,
        "cluster_spread": 2.0,
        "dirichlet_alpha": 0.1,
        "train_fraction": 0.75,
        "images_path": None,
        "labels_path": None,
    },
    "train": {
        "arch": "softmax",
        "hidden": 32,
        "learning_rate": 0.1,
        "local_epochs": 1,
        "rounds": 100,
        "alpha": 0.5,
        "batch_size": None,
        "l2": 0.0,
        "prox_mu": 0.01,
        "warmup_steps": 20,
        "refresh_em": False,
        "drop_links": False,
        "save_model": False,
    },
    "em": {
        "max_iter": 50,
        "tol": 1e-4,
        "update_models": False,
        "inner_steps": 50,
        "inner_lr": 0.1,
        "l2": 0.0,
    },
    "sweep": {
        "gamma_th": [5.0, 10.0, 15.0],
        "epsilon": [0.01, 0.05, 0.1],
        "density": [3e-3],
        "n_subchannels": [14],
        "replications": 20,
    },
    "validate": {
        "mc_samples": 20000,
        "layouts": 3,
        "perr_tolerance": 0.02,
        "grad_probes": 20,
        "grad_tolerance": 1e-4,
        "moment_tolerance": 1e-8,
    },
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_flag = {"type": "boolean"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_overrides = {"type": "object", "patternProperties": {"^[0-9]+$": _pos}, "additionalProperties": False}


def _block(props):
    return {"type": "object", "properties": props, "additionalProperties": False}


def _list(item):
    return {"type": "array", "items": item, "minItems": 1}


SCHEMA = _block({
    "mode": {"enum": list(MODES)},
    "master_seed": _count,
    "output_dir": {"type": "string", "minLength": 1},
    "topology": _block({
        "n_neighbors": {"anyOf": [_count, {"type": "null"}]},
        "density": {"anyOf": [_nonneg, {"type": "null"}]},
        "area": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "target_mode": {"enum": ["center", "nearest-center"]},
        "target_position": {"anyOf": [_pair, {"type": "null"}]},
    }),
    "channel": _block({
        "n_subchannels": _posint,
        "rayleigh_factor": _pos,
        "pathloss_exponent": {"type": "number", "minimum": 2},
        "ref_distance": _pos,
        "tx_power": _pos,
        "frequency": _pos,
        "boltzmann": _pos,
        "noise_temp": _pos,
        "bandwidth": _pos,
        "fading_threshold": _pos,
        "gamma_th": _pos,
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "conditioned": _flag,
        "tx_power_overrides": _overrides,
        "fading_threshold_overrides": _overrides,
    }),
    "data": _block({
        "source": {"enum": ["synthetic", "idx"]},
        "n_classes": {"type": "integer", "minimum": 2},
        "dim": _posint,
        "per_class_count": _posint,
        "cluster_spread": _pos,
        "dirichlet_alpha": _pos,
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "images_path": {"type": ["string", "null"]},
        "labels_path": {"type": ["string", "null"]},
    }),
    "train": _block({
        "arch": {"enum": ["softmax", "mlp"]},
        "hidden": _posint,
        "learning_rate": _nonneg,
        "local_epochs": _posint,
        "rounds": _posint,
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "batch_size": {"anyOf": [_posint, {"type": "null"}]},
        "l2": _nonneg,
        "prox_mu": _nonneg,
        "warmup_steps": _count,
        "refresh_em": _flag,
        "drop_links": _flag,
        "save_model": _flag,
    }),
    "em": _block({
        "max_iter": _posint,
        "tol": _nonneg,
        "update_models": _flag,
        "inner_steps": _count,
        "inner_lr": _nonneg,
        "l2": _nonneg,
    }),
    "sweep": _block({
        "gamma_th": _list(_pos),
        "epsilon": _list({"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}),
        "density": _list(_nonneg),
        "n_subchannels": _list(_posint),
        "replications": _posint,
    }),
    "validate": _block({
        "mc_samples": _posint,
        "layouts": _posint,
        "perr_tolerance": _pos,
        "grad_probes": _posint,
        "grad_tolerance": _pos,
        "moment_tolerance": _pos,
    }),
})

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _pointer(path):
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def _merge(base, update):
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in (
                "tx_power_overrides", "fading_threshold_overrides"):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully defaulted configuration. ``doc`` is the effective JSON."""

    doc: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["doc"][name]
        except KeyError:
            raise AttributeError(name) from None

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.doc == other.doc

    def to_json(self):
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    @property
    def config_hash(self):
        """Digest of everything except ``output_dir``, so moving a run keeps
        its outputs byte-identical."""
        body = {k: v for k, v in self.doc.items() if k != "output_dir"}
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def header(self):
        return f"config_hash={self.config_hash} seed={self.master_seed}"

    def channel_params(self):
        ch = dict(self.doc["channel"])
        for key in ("tx_power_overrides", "fading_threshold_overrides"):
            ch[key] = {int(k): float(v) for k, v in ch[key].items()}
        return ChannelParams(**ch)

    def em_config(self):
        return EMConfig(**self.doc["em"])

    def with_overrides(self, **top_level):
        return from_dict(_merge(self.doc, top_level))


def validate_document(doc):
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _pointer(err.absolute_path))


def from_dict(doc):
    """Validate ``doc``, fill defaults and check cross-field constraints."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    validate_document(doc)
    full = _merge(DEFAULTS, doc)
    validate_document(full)
    topo = full["topology"]
    if (topo["n_neighbors"] is None) == (topo["density"] is None):
        raise ConfigError("give exactly one of n_neighbors or density", "/topology")
    if full["data"]["source"] == "idx" and not (full["data"]["images_path"] and full["data"]["labels_path"]):
        raise ConfigError("idx source needs images_path and labels_path", "/data")
    return ExperimentConfig(full)


def parse_config(path=None, overrides=(), seed=None, output_dir=None):
    """Load a JSON config file (or defaults when ``path`` is None) and apply
    ``key.path=value`` overrides; values are parsed as JSON, falling back to
    plain strings."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError("override path crosses a non-object", _pointer(parts))
        node[parts[-1]] = value
    if seed is not None:
        doc["master_seed"] = seed
    if output_dir is not None:
        doc["output_dir"] = output_dir
    return from_dict(doc)


def write_effective(config, directory=None):
    directory = directory or config.output_dir
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "config.json")
    with open(path, "w") as fh:
        fh.write(config.to_json())
    return path
