"""Experiment configuration: JSON files, named presets, flag overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, fields

from .training import TrainConfig


class ConfigError(ValueError):
    pass


# Best configurations for the four reference datasets (shared: Adam with
# weight decay 1e-5, early-stop patience 5), plus a desk-scale synthetic
# preset used by the end-to-end tests.
PRESETS: dict[str, dict] = {
    "mimic": dict(learning_rate=1e-3, dim_embed=70, alpha1=0.1, alpha2=0.01,
                  field_layers=6, dim_hidden=128, field_hidden=90, batch_size=16),
    "memetracker": dict(learning_rate=1e-3, dim_embed=70, alpha1=1e-4, alpha2=1e-4,
                        field_layers=5, dim_hidden=64, field_hidden=15, batch_size=512),
    "retweet": dict(learning_rate=5e-3, dim_embed=80, alpha1=1e-4, alpha2=1e-4,
                    field_layers=4, dim_hidden=16, field_hidden=15, batch_size=128),
    "stackoverflow": dict(learning_rate=5e-3, dim_embed=50, alpha1=1.0, alpha2=1e-2,
                          field_layers=4, dim_hidden=32, field_hidden=15, batch_size=16),
    "synthetic": dict(learning_rate=3e-3, dim_embed=16, alpha1=1.0, alpha2=0.01,
                      field_layers=3, dim_hidden=32, field_hidden=32, batch_size=32,
                      substeps=4),
}

_FIELD_NAMES = {f.name for f in fields(TrainConfig)}


def build_config(preset: str | None = None, config_path: str | None = None,
                 overrides: dict | None = None) -> TrainConfig:
    """Assemble a TrainConfig: preset values, then file values, then flag
    overrides, each layer winning over the previous one."""
    merged: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}'; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    if config_path is not None:
        try:
            with open(config_path) as f:
                file_values = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {config_path}: {e}") from e
        if not isinstance(file_values, dict):
            raise ConfigError(f"{config_path}: expected a JSON object")
        file_preset = file_values.pop("preset", None)
        if file_preset is not None and preset is None:
            if file_preset not in PRESETS:
                raise ConfigError(f"unknown preset '{file_preset}' in {config_path}")
            merged.update(PRESETS[file_preset])
        merged.update(file_values)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(merged) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
