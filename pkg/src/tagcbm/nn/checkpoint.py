"""Parameter checkpoints.

Layout (JSON, UTF-8)::

    {"format": "tagcbm-params", "version": 1, "kind": "gcn" | "mlp",
     "meta": {...},
     "arrays": [{"name": "W1", "shape": [64, 64], "data": [...row-major floats...]}, ...]}

Floats are written with ``repr`` precision so a save/load round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import GcnEncoderParams, MlpClassifierParams

FORMAT = "tagcbm-params"
VERSION = 1


class CheckpointError(ValueError):
    pass


def params_to_json(params, meta: dict | None = None) -> dict:
    if isinstance(params, GcnEncoderParams):
        kind = "gcn"
    elif isinstance(params, MlpClassifierParams):
        kind = "mlp"
    else:
        raise CheckpointError(f"cannot checkpoint {type(params).__name__}")
    arrays = [{"name": name, "shape": list(a.shape), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
              for name, a in params.named_arrays()]
    return {"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta or {}, "arrays": arrays}


def params_from_json(obj: dict):
    if obj.get("format") != FORMAT:
        raise CheckpointError("not a parameter checkpoint")
    if obj.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {obj.get('version')}")
    named = {}
    for rec in obj["arrays"]:
        arr = np.asarray(rec["data"], dtype=np.float64)
        if arr.size != int(np.prod(rec["shape"])):
            raise CheckpointError(f"array {rec['name']} has {arr.size} values for shape {rec['shape']}")
        named[rec["name"]] = arr.reshape(rec["shape"])
    if obj["kind"] == "gcn":
        return GcnEncoderParams(named["W1"], named["W2"], named.get("b1"), named.get("b2"))
    if obj["kind"] == "mlp":
        n = sum(1 for k in named if k.startswith("weights."))
        return MlpClassifierParams([named[f"weights.{i}"] for i in range(n)],
                                   [named[f"biases.{i}"] for i in range(n)])
    raise CheckpointError(f"unknown checkpoint kind {obj['kind']!r}")


def save_params(path: str | Path, params, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(params_to_json(params, meta)), encoding="utf-8")


def load_params(path: str | Path):
    return params_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_meta(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("meta", {})
