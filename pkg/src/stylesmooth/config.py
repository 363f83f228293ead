"""Experiment configuration: one JSON document, validated against a schema and merged over defaults."""

from __future__ import annotations

import copy
import json
import os
from typing import Any

import jsonschema

from .datagen import SEVERITY_TABLE, VARIANTS
from .errors import ConfigError

DEFAULTS: dict[str, Any] = {
    "run_name": "default",
    "seeds": [0, 1, 2, 3, 4],
    "data": {"samples_per_class": 40, "test_per_class": 30, "corruption": "gaussian_noise"},
    "stylizer": {
        "encoder_steps": 300,
        "encoder_lr": 0.05,
        "decoder_steps": 2000,
        "decoder_lr": 2e-3,
        "style_weight": 10.0,
        "batch_size": 8,
    },
    "classifier": {"n_filters": 8, "steps": 2500, "learning_rate": 0.05, "batch_size": 16},
    "nss": {"k": 4, "w_aug": 1.0, "w_cons": 1.0},
    "smoothing": {"n_styles": 10, "alpha": 0.5, "timing_n_styles": 15, "timing_samples": 20},
    "sweep": {"n_values": [1, 3, 5, 10, 15, 25], "variant": "c5", "classifier": "erm"},
}

_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_NONNEG_NUM = {"type": "number", "minimum": 0}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "run_name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1, "uniqueItems": True},
        "data": _section({
            "samples_per_class": _POS_INT,
            "test_per_class": {"type": "integer", "minimum": 3},
            "corruption": {"enum": sorted(SEVERITY_TABLE)},
        }),
        "stylizer": _section({
            "encoder_steps": {"type": "integer", "minimum": 0},
            "encoder_lr": _POS_NUM,
            "decoder_steps": {"type": "integer", "minimum": 0},
            "decoder_lr": _POS_NUM,
            "style_weight": _NONNEG_NUM,
            "batch_size": _POS_INT,
        }),
        "classifier": _section({
            "n_filters": _POS_INT,
            "steps": {"type": "integer", "minimum": 0},
            "learning_rate": _POS_NUM,
            "batch_size": _POS_INT,
        }),
        "nss": _section({"k": _POS_INT, "w_aug": _NONNEG_NUM, "w_cons": _NONNEG_NUM}),
        "smoothing": _section({
            "n_styles": _POS_INT,
            "alpha": {"type": "number", "minimum": 0, "maximum": 1},
            "timing_n_styles": _POS_INT,
            "timing_samples": _POS_INT,
        }),
        "sweep": _section({
            "n_values": {"type": "array", "items": _POS_INT, "minItems": 1},
            "variant": {"enum": list(VARIANTS)},
            "classifier": {"enum": ["erm", "nss"]},
        }),
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _key_path(error: jsonschema.ValidationError) -> str:
    path = [str(p) for p in error.absolute_path]
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        path += extra[:1]
    return ".".join(path) or "<root>"


def validate(doc: Any) -> dict:
    """Check ``doc`` against :data:`SCHEMA` and return it merged over :data:`DEFAULTS`.

    Raises ConfigError whose ``key`` attribute is the dotted path of the
    offending entry.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        key = _key_path(err)
        exc = ConfigError(f"config key {key!r}: {err.message}")
        exc.key = key
        raise exc
    return _merge(DEFAULTS, doc)


def load_config(path: str | os.PathLike | None) -> dict:
    if path is None:
        return validate({})
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        err = ConfigError(f"cannot read config {path}: {exc.strerror}")
        err.key = "<file>"
        raise err from exc
    return validate(doc)
