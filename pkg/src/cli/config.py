"""
Experiment configuration: YAML files with ``base:`` inheritance, validated
against a JSON schema.
"""

import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Set

import yaml
from jsonschema import Draft7Validator
from jsonschema.exceptions import ValidationError

from src.exceptions import ConfigError

logger = logging.getLogger(__name__)

COMMANDS = ("power-scaling", "edof", "train", "beamform", "region")
STOCHASTIC_COMMANDS = ("train", "beamform")

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_POSITIVE_INT = {"type": "integer", "minimum": 1}
_POSITIVE_LIST = {"type": "array", "items": _POSITIVE, "minItems": 1}


def _strict(properties: Dict[str, Any], required: Iterable[str] = ()) -> Dict[str, Any]:
    return {
        "type": "object",
        "properties": properties,
        "required": list(required),
        "additionalProperties": False,
    }


GEOMETRY_SCHEMA = _strict(
    {
        "lambda": _POSITIVE,
        "spacing": _POSITIVE,
        "rows": _POSITIVE_INT,
        "cols": _POSITIVE_INT,
        "center": _VEC3,
        "normal": _VEC3,
    },
    required=["lambda", "spacing", "rows", "cols"],
)

PLACEMENT_SCHEMA = _strict(
    {
        "tx": _VEC3,
        "rx": _VEC3,
        "bs": _VEC3,
        "users": {"type": "array", "items": _VEC3, "minItems": 1},
        "transmitters": {"type": "array", "items": _VEC3, "minItems": 1},
    }
)

SCALING_SCHEMA = _strict(
    {
        "apertures": _POSITIVE_LIST,
        "distances": _POSITIVE_LIST,
        "rx_side": _POSITIVE,
        "rx_spacing": _POSITIVE,
        "threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "samples_per_wavelength": {"type": "integer", "minimum": 2},
    },
    required=["apertures", "distances", "rx_side"],
)

PRISM_SCHEMA = _strict(
    {
        "volume_rx": _POSITIVE,
        "volume_tx": _POSITIVE,
        "distance": _POSITIVE,
        "depth_tx": _POSITIVE,
        "depth_rx": _POSITIVE,
    },
    required=["volume_rx", "volume_tx", "distance", "depth_tx", "depth_rx"],
)

EXPERIMENT_SCHEMA = {
    **_strict(
        {
            "kind": {"type": "string", "enum": list(COMMANDS)},
            # power-scaling
            "ris_kind": {"type": "string", "enum": ["patch", "metasurface", "both"]},
            "sizes": {"type": "array", "items": _POSITIVE_INT, "minItems": 1},
            "areas": _POSITIVE_LIST,
            "samples_per_wavelength": {"type": "integer", "minimum": 2},
            "pathloss": {"type": "string", "enum": ["free_space", "unit"]},
            "compare_receivers": {"type": "integer", "minimum": 0},
            "far_rx": _VEC3,
            # edof / region
            "distances": _POSITIVE_LIST,
            "rx_antennas": _POSITIVE_INT,
            "rx_spacing": _POSITIVE,
            "angle_deg": {"type": "number", "exclusiveMinimum": -90, "exclusiveMaximum": 90},
            "threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "scaling": SCALING_SCHEMA,
            "prism": PRISM_SCHEMA,
            "aperture": {"type": "number", "minimum": 0},
            # train
            "protocols": {
                "type": "array",
                "items": {"type": "string", "enum": ["exhaustive", "two_phase", "hierarchical"]},
                "minItems": 1,
                "uniqueItems": True,
            },
            "trials": _POSITIVE_INT,
            "angles": _POSITIVE_INT,
            "distance_samples": _POSITIVE_INT,
            "L1": {"type": "integer", "minimum": 0},
            "L2": {"type": "integer", "minimum": 0},
            "distance_branches": _POSITIVE_INT,
            "d_min": _POSITIVE,
            "d_max": _POSITIVE,
            "noise_variance": {"type": "number", "minimum": 0},
            "on_grid": {"type": "boolean"},
            "split_sweep": {"type": "boolean"},
            # beamform
            "phase_grid": {"type": "integer", "minimum": 4},
            "star": {"type": "boolean"},
            "max_sweeps": _POSITIVE_INT,
            "tol": _POSITIVE,
            "noise": _POSITIVE,
            "power": _POSITIVE,
            "weights": _POSITIVE_LIST,
            "random_init": {"type": "boolean"},
        }
    ),
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "power-scaling"}}, "required": ["kind"]},
            "then": {"required": ["sizes"]},
        },
        {
            "if": {"properties": {"kind": {"const": "edof"}}, "required": ["kind"]},
            "then": {"required": ["distances"]},
        },
        {
            "if": {"properties": {"kind": {"const": "train"}}, "required": ["kind"]},
            "then": {
                "required": ["protocols", "trials", "angles", "distance_samples", "d_min", "d_max"]
            },
        },
        {
            "if": {"properties": {"kind": {"const": "beamform"}}, "required": ["kind"]},
            "then": {"required": ["sizes"]},
        },
    ],
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["geometry", "experiment"],
    "properties": {
        "base": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "geometry": GEOMETRY_SCHEMA,
        "placement": PLACEMENT_SCHEMA,
        "experiment": EXPERIMENT_SCHEMA,
        "output": _strict({"dir": {"type": "string", "minLength": 1}}),
        "logging": _strict(
            {"level": {"type": "string", "enum": ["DEBUG", "INFO", "WARNING", "ERROR"]}}
        ),
    },
    "additionalProperties": False,
}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``; non-mapping values replace."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _read_yaml(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def load_config(path: str, _seen: Optional[Set[str]] = None) -> Dict[str, Any]:
    """
    Load a YAML config, resolving ``base:`` files relative to the including file.

    Args:
        path: Path to the config file

    Returns:
        Merged (unvalidated) configuration mapping
    """
    real = os.path.realpath(path)
    seen = set() if _seen is None else _seen
    if real in seen:
        raise ConfigError(f"circular base reference through {path}", "base")
    seen.add(real)

    data = _read_yaml(path)
    base = data.get("base")
    if base is None:
        return data
    if not isinstance(base, str):
        raise ConfigError("must be a relative file path", "base")
    base_path = os.path.join(os.path.dirname(path), base)
    logger.debug(f"Config {path} inherits from {base_path}")
    return deep_merge(load_config(base_path, seen), data)


def _key_path(error: ValidationError) -> str:
    parts: List[str] = [str(p) for p in error.absolute_path]
    if error.validator == "required" and isinstance(error.instance, dict):
        missing = [k for k in error.validator_value if k not in error.instance]
        if missing:
            parts.append(str(missing[0]))
    elif error.validator == "additionalProperties" and isinstance(error.instance, dict):
        allowed = error.schema.get("properties", {})
        extra = sorted(k for k in error.instance if k not in allowed)
        if extra:
            parts.append(str(extra[0]))
    return ".".join(parts)


def validate_config(
    config: Dict[str, Any], command: str, seed_override: Optional[int] = None
) -> Dict[str, Any]:
    """
    Validate a merged config for ``command``.

    Fills ``experiment.kind`` when absent, rejects a kind that names another
    subcommand, and requires a seed for stochastic commands (and for power-scaling runs
    that sample receivers) unless one is given on the command line.

    Raises:
        ConfigError: carrying the dotted key path of the first violation
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    config = copy.deepcopy(config)
    experiment = config.get("experiment")
    if isinstance(experiment, dict):
        kind = experiment.setdefault("kind", command)
        if kind != command:
            raise ConfigError(f"is {kind!r} but the subcommand is {command!r}", "experiment.kind")

    errors = list(Draft7Validator(CONFIG_SCHEMA).iter_errors(config))
    if errors:
        # unknown keys first (usually typos), then the most specific location
        error = min(
            errors,
            key=lambda e: (e.validator != "additionalProperties", -len(e.absolute_path), e.message),
        )
        raise ConfigError(error.message, _key_path(error))

    if seed_override is not None:
        config["seed"] = int(seed_override)
    if command in STOCHASTIC_COMMANDS and "seed" not in config:
        raise ConfigError("is required for stochastic experiments (or pass --seed)", "seed")
    if _samples_receivers(config, command) and "seed" not in config:
        raise ConfigError("is required when compare_receivers > 0 (or pass --seed)", "seed")
    return config


def _samples_receivers(config: Dict[str, Any], command: str) -> bool:
    """Power-scaling runs draw random receivers when compare_receivers is positive."""
    if command != "power-scaling":
        return False
    return int(config.get("experiment", {}).get("compare_receivers", 0)) > 0


def config_digest(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
