"""Experiment-config schema and strict validation.

Configs are flat JSON objects validated before anything executes: wrong
types, unknown fields and missing requirements are rejected with the
offending field named. The same schema dict is shipped as
``schemas/experiment-config.schema.json``.
"""

from __future__ import annotations

import json
from importlib import resources

COMMANDS = ("certify-denoiser", "solve", "stability", "convergence-study",
            "characterize-limit")

GENERATOR_KINDS = ("identity", "gaussian-blur", "subsample")

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "pnp-reg experiment config",
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "denoiser"],
    "properties": {
        "command": {"type": "string", "enum": list(COMMANDS)},
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
        "denoiser": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {
                    "type": "string",
                    "enum": ["soft-threshold", "hard-threshold", "scaled",
                             "prox-quadratic", "filter", "causal"],
                },
                "params": {"type": "object"},
                "scaling": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {"rule": {"type": "string"}},
                },
            },
        },
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "generator": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "n"],
                    "properties": {
                        "kind": {"type": "string", "enum": list(GENERATOR_KINDS)},
                        "n": {"type": "integer"},
                        "width": {"type": "number"},
                        "rate": {"type": "number"},
                    },
                },
                "operator_file": {"type": "string"},
                "y": {"type": "array", "items": {"type": "number"}},
                "x_dagger": {"type": "array", "items": {"type": "number"}},
            },
        },
        "lambda": {"type": "number"},
        "lambda_grid": {"type": "array", "items": {"type": "number"}},
        "step_size": {"type": "number"},
        "algorithm": {"type": "string", "enum": ["fbs", "admm"]},
        "dim": {"type": "integer"},
        "pairs": {"type": "integer"},
        "noise_scale": {"type": "number"},
        "deltas": {"type": "array", "items": {"type": "number"}},
        "delta_count": {"type": "integer"},
        "M": {"type": "number"},
        "trace_objective": {"type": "boolean"},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "solver": {"type": "number"},
                "check": {"type": "number"},
            },
        },
    },
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_TYPE_MAP = {
    "object": dict,
    "array": list,
    "string": str,
    "integer": int,
    "number": (int, float),
    "boolean": bool,
    "null": type(None),
}


def _type_ok(value, typename):
    pytype = _TYPE_MAP[typename]
    if typename == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if typename == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if typename == "boolean":
        return isinstance(value, bool)
    return isinstance(value, pytype)


def _validate(value, schema, path):
    types = schema.get("type")
    if types is not None:
        allowed = [types] if isinstance(types, str) else list(types)
        if not any(_type_ok(value, t) for t in allowed):
            raise ConfigError(path, f"expected {' or '.join(allowed)}")
    if "enum" in schema and value not in schema["enum"]:
        raise ConfigError(path, f"must be one of {schema['enum']}")
    if isinstance(value, dict):
        props = schema.get("properties", {})
        if schema.get("additionalProperties") is False:
            for key in value:
                if key not in props:
                    raise ConfigError(f"{path}.{key}" if path else key,
                                      "unknown field")
        for key in schema.get("required", ()):
            if key not in value:
                raise ConfigError(f"{path}.{key}" if path else key,
                                  "required field missing")
        for key, sub in props.items():
            if key in value:
                _validate(value[key], sub, f"{path}.{key}" if path else key)
    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            _validate(item, schema["items"], f"{path}[{i}]")


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _validate(cfg, SCHEMA, "")
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<config>", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}")
    return validate_config(cfg)


def shipped_schema() -> dict:
    text = resources.files("pnpreg").joinpath(
        "schemas/experiment-config.schema.json").read_text()
    return json.loads(text)
