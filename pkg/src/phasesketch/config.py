"""Sweep configuration files (YAML or JSON) and their schema."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .model import KINDS
from .vqe_engine import SweepConfig

_NUMBER = {"type": "number"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "phasesketch sweep",
    "type": "object",
    "required": ["model", "g_grid", "p_grid"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["kind", "size"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(KINDS)},
                "size": {
                    "oneOf": [
                        {"type": "integer", "minimum": 2},
                        {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2},
                    ]
                },
                "constants": {"type": "object", "additionalProperties": _NUMBER},
            },
        },
        "g_grid": {
            "oneOf": [
                {"type": "array", "items": _NUMBER, "minItems": 1},
                {
                    "type": "object",
                    "required": ["min", "max", "count"],
                    "additionalProperties": False,
                    "properties": {"min": _NUMBER, "max": _NUMBER, "count": {"type": "integer", "minimum": 1}},
                },
            ]
        },
        "p_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "n_restarts": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "warm_start": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "depth": {"type": "boolean"},
                "cross_g": {"type": "boolean"},
                "depth_mode": {"enum": ["smooth", "zero_pad", "auto"]},
            },
        },
        "compute_exact": {"type": "boolean"},
        "order_params": {"type": "array", "items": {"type": "string"}},
        "init_bound": {"type": "number", "exclusiveMinimum": 0},
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_g": {"type": "number", "exclusiveMinimum": 0},
                "tol_f": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "memory": {"type": "integer", "minimum": 1},
                "max_restarts": {"type": "integer", "minimum": 0},
            },
        },
        "workers": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


def _expand_grid(grid) -> list[float]:
    if isinstance(grid, dict):
        return [float(v) for v in np.linspace(grid["min"], grid["max"], grid["count"])]
    return [float(v) for v in grid]


def config_from_dict(raw: dict) -> SweepConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid sweep config:\n  " + "\n  ".join(lines))
    m = raw["model"]
    ws = raw.get("warm_start", {})
    try:
        return SweepConfig(
            model=m["kind"],
            size=m["size"],
            constants=dict(m.get("constants", {})),
            g_grid=_expand_grid(raw["g_grid"]),
            p_grid=list(raw["p_grid"]),
            n_restarts=raw.get("n_restarts", 5),
            seed=raw.get("seed", 0),
            depth_warm_start=ws.get("depth", True),
            cross_g_warm_start=ws.get("cross_g", True),
            depth_mode=ws.get("depth_mode", "auto"),
            compute_exact=raw.get("compute_exact", False),
            order_params=raw.get("order_params"),
            init_bound=raw.get("init_bound", 1.0),
            optimizer=dict(raw.get("optimizer", {})),
            workers=raw.get("workers", 1),
            output_dir=raw.get("output_dir"),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid sweep config: {exc}") from exc


def load_config(path) -> SweepConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def config_to_dict(cfg: SweepConfig) -> dict:
    """The normalised config as stored in a record store manifest."""
    out = {
        "model": {"kind": cfg.model, "size": cfg.size, "constants": dict(cfg.constants)},
        "g_grid": list(cfg.g_grid),
        "p_grid": list(cfg.p_grid),
        "n_restarts": cfg.n_restarts,
        "seed": cfg.seed,
        "warm_start": {"depth": cfg.depth_warm_start, "cross_g": cfg.cross_g_warm_start,
                       "depth_mode": cfg.depth_mode},
        "compute_exact": cfg.compute_exact,
        "init_bound": cfg.init_bound,
        "optimizer": dict(cfg.optimizer),
    }
    if cfg.order_params is not None:
        out["order_params"] = list(cfg.order_params)
    return out
