"""Run configuration: YAML document, JSON-schema validated, defaults merged.

Unknown keys are rejected by the schema. `section.key=value` overrides
are parsed with YAML scalar rules.
"""

import copy
import hashlib
import json
from importlib import resources

import jsonschema
import yaml

from .errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "text": {"stopwords": None, "fit_on": "overlay"},
    "cko": {"k": 4, "similarity": "cosine", "embeddings": None},
    "gan": {
        "margin": 0.1, "lambda_t": 1.0, "n_d": 5, "n_step": 10000,
        "patience": 100, "batch_size": 1000, "n_pos": 5, "n_neg": 5,
        "alpha": 0.001, "beta1": 0.5, "beta2": 0.9, "gp_weight": 10.0,
        "eval_every": 40, "knn_k": 20, "probe_per_class": 60,
        "val_fraction": 0.1, "reduce_dim": 1000, "hidden_dim": 2048,
        "disc_hidden_dim": 2048, "noise_sigma": 1.0, "noise_mode": "add",
    },
    "ssl": {"psi": 0.5, "n_ssl": 1, "per_class_synthetic": 60, "knn_k": 20},
    "eval": {
        "lambda_min": -2.0, "lambda_max": 2.0, "step": 0.01,
        "ratios": [0.25, 0.5, 1.0], "per_class_synthetic": 60, "knn_k": 20,
    },
    "io": {},
}


def _schema():
    text = resources.files("zsgen").joinpath("config_schema.json").read_text("utf-8")
    return json.loads(text)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_override(cfg, setting):
    """Apply one `section.key=value` command-line override in place."""
    if "=" not in setting:
        raise ConfigError(f"override {setting!r} must look like section.key=value")
    dotted, raw = setting.split("=", 1)
    keys = dotted.split(".")
    value = yaml.safe_load(raw)
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-section {key!r}")
    node[keys[-1]] = value


def load_config(path=None, overrides=()):
    """Load, override, default-fill and validate a run configuration."""
    document = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            document = yaml.safe_load(fh) or {}
        if not isinstance(document, dict):
            raise ConfigError(f"{path} must contain a mapping")
    for setting in overrides:
        apply_override(document, setting)
    try:
        jsonschema.validate(document, _schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}")
    return _merge(DEFAULTS, document)


def config_hash(cfg):
    """Stable content hash of a validated config document."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
