"""Run configuration: one YAML tree covering every module, plus overrides.

Unknown keys are rejected at any depth. ``--set a.b=value`` overrides parse
``value`` as YAML, so numbers, booleans, ``null`` and lists work as
expected. Every run writes the fully resolved tree next to its outputs.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "out",
    "cann": {
        "dims": 1,
        "n_per_axis": 37,
        "tau": 1.0,
        "j0": 4.0,
        "a": 0.5,
        "k": None,  # 0.3 * critical k
        "a_ext": 10.0,
        "b_ext": None,  # 1 / (4 a^2)
        "dt": None,  # 0.05 * tau
        "kernel_exponent": "squared",
    },
    "data": {
        "length": 500,
        "test_length": 3750,
        "train_per_epoch": 12,
        "n_val": 3,
        "n_test": 2,
        "settle_steps": 10,
        "min_segment": 10,
    },
    "simulate": {
        "mode": "dataset",  # dataset | bump
        "train_sequences": None,  # defaults to data.train_per_epoch
        "include_test": False,
        "bump_frames": 120,
        "bump_start": 2.0,  # ramp start angle for the bump dump (rad)
        "bump_rate": 0.05,  # rad per frame
    },
    "gen_data": {
        "side": 10.0,
        "speed": 1.0,
        "turn_rate": math.pi / 2,
        "rate_hz": 30.0,
        "scale_error": 0.01,
        "yaw_bias": 0.002,
    },
    "train": {
        "dataset": None,
        "regenerate": False,
        "epochs": 200,
        "sequences_per_epoch": 12,
        "batch_size": 1,
        "truncation": None,
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "clip_norm": 1.0,
        "hidden_size": None,
    },
    "eval_fidelity": {"weights": None, "dataset": None, "split": "test"},
    "pi": {
        "cues": None,
        "hdcn_weights": None,
        "gcn_weights": None,
        "l_xy": 20.0,
        "l_z": 10.0,
        "warmup_frames": 10,
    },
    "graph": {
        "mu_gc": 0.5,
        "mu_hdc": 0.5,
        "score_threshold": 0.25,
        "alpha": 0.5,
        "relax_iterations": 20,
    },
    "eval": {
        "estimate": None,
        "ground_truth": None,
        "method": "estimate",
        "alignment": "first_pose",
        "time_cost_s": None,
    },
    "bench": {
        "workloads": ["cann_1d", "cann_3d", "replica_hdcn", "replica_gcn", "pi_pipeline"],
        "frames": 100,
        "repeats": 3,
        "hdcn_weights": None,
        "gcn_weights": None,
    },
    "plot": {
        "kind": "trajectories",  # trajectories | bump | slices
        "inputs": [],
        "labels": [],
        "title": None,
    },
}


def _merge(base: dict, update: dict, path: str = "") -> None:
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def parse_override(text: str) -> dict:
    if "=" not in text:
        raise ConfigError(f"override '{text}' must look like key.path=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override '{text}' has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{text}': {exc}") from None
    tree: dict = {parts[-1]: value}
    for p in reversed(parts[:-1]):
        tree = {p: tree}
    return tree


def load_config(path=None, overrides: list[str] = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, data)
    for o in overrides:
        _merge(cfg, parse_override(o))
    return cfg


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def write_resolved(cfg: dict, out_dir, name: str) -> Path:
    path = Path(out_dir) / f"{name}.resolved.yaml"
    path.write_text(dump_config(cfg))
    return path
