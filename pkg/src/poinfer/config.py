"""Experiment configuration: a YAML document with a fixed, documented key set."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .exceptions import ConfigError

DEFAULTS = {
    "dataset": {
        "name": "mnist-sample",  # mnist-sample | idx | cifar10
        "train_per_class": 200,
        "test_per_class": 100,
        "split_seed": 0,
        "train_images": None,
        "train_labels": None,
        "test_images": None,
        "test_labels": None,
        "train_files": [],
        "test_files": [],
    },
    "arch": "mnist-cnn",
    "weights": None,
    "train": {
        "epochs": 10,
        "batch_size": 32,
        "learning_rate": 0.001,
        "validation_fraction": 0.0,
        "early_stop_patience": None,
    },
    "p_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    "strategies": ["random"],
    "policies": ["const(0)"],
    "hide_biases": True,
    "runs": 10,
    "retrain": False,
    "seed": 0,
    "backend": "exact",  # exact | cost-model
    "params": "n8192-d2",
    "packing": {"fc": "naive", "conv": "filter"},
    "mode": "relin-only",
    "cost_table": "paper-default",  # paper-default | path to a bench CSV
    "layers": [
        {"kind": "naive", "dims": [128, 10]},
        {"kind": "filter", "dims": [32, 32, 3, 32, 3]},
    ],
    "bench": {"params": "n4096-d2", "repetitions": 30},
}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be a mapping")
            out[key] = _merge(defaults[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _validate(cfg: dict) -> None:
    grid = cfg["p_grid"]
    if not isinstance(grid, list) or not grid or not all(isinstance(p, (int, float)) and 0 <= p <= 1 for p in grid):
        raise ConfigError("p_grid must be a non-empty list of values in [0, 1]")
    if not isinstance(cfg["runs"], int) or cfg["runs"] < 1:
        raise ConfigError("runs must be an integer >= 1")
    if cfg["backend"] not in ("exact", "cost-model"):
        raise ConfigError(f"backend must be 'exact' or 'cost-model', got {cfg['backend']!r}")
    if cfg["mode"] not in ("relin-only", "rescale-all"):
        raise ConfigError(f"mode must be 'relin-only' or 'rescale-all', got {cfg['mode']!r}")
    for layer in cfg["layers"]:
        if set(layer) != {"kind", "dims"}:
            raise ConfigError(f"each cost layer needs exactly 'kind' and 'dims', got {sorted(layer)}")


def load_config(path=None, seed: int | None = None) -> dict:
    """Parsed config with defaults filled in; ``seed`` overrides the file's seed."""
    given = {}
    if path is not None:
        try:
            given = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(given, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = _merge(DEFAULTS, given, "")
    if seed is not None:
        cfg["seed"] = seed
    cfg["p_grid"] = [float(p) for p in cfg["p_grid"]]
    _validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
