"""Versioned JSON checkpoints: ``{format_version, kind, arch, tensors}``."""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1
KINDS = ("classifier", "encoder", "decoder")


def tensor_to_json(array: np.ndarray) -> dict[str, Any]:
    array = np.asarray(array, dtype=np.float64)
    return {"shape": list(array.shape), "data": array.reshape(-1).tolist()}


def tensor_from_json(obj: dict[str, Any]) -> np.ndarray:
    try:
        shape = [int(s) for s in obj["shape"]]
        data = np.asarray(obj["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed tensor entry: {exc}") from None
    if int(np.prod(shape)) != data.size:
        raise CheckpointError(f"tensor shape {shape} does not match {data.size} values")
    return data.reshape(shape)


def make_checkpoint(kind: str, arch: dict[str, Any], tensors: dict[str, np.ndarray]) -> dict[str, Any]:
    if kind not in KINDS:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "arch": arch,
        "tensors": {name: tensor_to_json(value) for name, value in tensors.items()},
    }


def save_checkpoint(path: str | os.PathLike, doc: dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def parse_checkpoint(doc: Any, kind: str | None = None, source: str = "checkpoint") -> dict[str, Any]:
    """Validate an in-memory checkpoint document; tensors come back as arrays."""
    if not isinstance(doc, dict):
        raise CheckpointError(f"{source}: expected a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{source}: unsupported format_version {doc.get('format_version')!r}")
    if kind is not None and doc.get("kind") != kind:
        raise CheckpointError(f"{source}: expected a {kind} checkpoint, found {doc.get('kind')!r}")
    if not isinstance(doc.get("arch"), dict):
        raise CheckpointError(f"{source}: missing arch section")
    out = dict(doc)
    out["tensors"] = {name: t if isinstance(t, np.ndarray) else tensor_from_json(t)
                      for name, t in doc.get("tensors", {}).items()}
    return out


def load_checkpoint(path: str | os.PathLike, kind: str | None = None) -> dict[str, Any]:
    """Read and validate a checkpoint file."""
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    return parse_checkpoint(doc, kind, str(path))
