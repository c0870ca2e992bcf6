"""Versioned JSON model files.

Every float is serialized through Python's shortest round-trip decimal
representation, so load(save(m)) reproduces bitwise-identical predictions.
A SHA-256 checksum over the canonical payload guards against corruption.
The file carries no timestamps: identically seeded runs write byte-identical
files.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .auc_head import AUCHead
from .data import ColumnSpec, NormalizationStats, schema_to_json
from .ensemble import DBDTModel
from .sdt import NodeNet, SDTParams

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Malformed, unsupported, or corrupted model file."""


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _tree_to_json(tree: SDTParams) -> dict:
    return {
        "inner": [
            {
                "layers": [
                    {"weights": w.tolist(), "bias": b.tolist()}
                    for w, b in node.layers
                ]
            }
            for node in tree.inner
        ],
        "leaves": tree.leaves.tolist(),
    }


def _tree_from_json(doc: dict, depth: int) -> SDTParams:
    inner = [
        NodeNet(layers=[
            (np.array(layer["weights"], dtype=float), np.array(layer["bias"], dtype=float))
            for layer in node["layers"]
        ])
        for node in doc["inner"]
    ]
    return SDTParams(depth=depth, inner=inner, leaves=np.array(doc["leaves"], dtype=float))


def save_model(
    path,
    model: DBDTModel,
    schema: list[ColumnSpec],
    stats: NormalizationStats,
    head: AUCHead | None = None,
    config: dict | None = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "schema": schema_to_json(schema),
        "normalization": {
            "column_idx": list(stats.column_idx),
            "mean": stats.mean.tolist(),
            "std": stats.std.tolist(),
            "feature_names": list(stats.feature_names),
        },
        "model": {
            "depth": model.depth,
            "layer_count": len(model.trees[0].inner[0].layers),
            "score_squash": model.score_squash,
            "feature_names": list(model.feature_names),
            "trees": [_tree_to_json(t) for t in model.trees],
        },
        "auc_head": {
            "a": head.a if head else 0.0,
            "b": head.b if head else 0.0,
        },
        "config": config or {},
    }
    doc = dict(payload)
    doc["checksum"] = hashlib.sha256(_canonical(payload)).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Load a model file; returns (model, schema, stats, head_dict, config).
    Verifies the format version and the content checksum."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: unknown model format version {doc.get('format_version')!r}"
        )
    checksum = doc.pop("checksum", None)
    if checksum != hashlib.sha256(_canonical(doc)).hexdigest():
        raise ModelFileError(f"{path}: checksum mismatch, file corrupted")

    mdoc = doc["model"]
    trees = [_tree_from_json(t, mdoc["depth"]) for t in mdoc["trees"]]
    model = DBDTModel(
        trees=trees,
        feature_names=list(mdoc["feature_names"]),
        score_squash=bool(mdoc["score_squash"]),
        trained_config=doc.get("config", {}),
    )
    ndoc = doc["normalization"]
    stats = NormalizationStats(
        column_idx=tuple(ndoc["column_idx"]),
        mean=np.array(ndoc["mean"], dtype=float),
        std=np.array(ndoc["std"], dtype=float),
        feature_names=tuple(ndoc["feature_names"]),
    )
    schema = [
        ColumnSpec(
            name=e["name"],
            kind=e["kind"],
            ordering=tuple(e["ordering"]) if e.get("ordering") else None,
            categories=tuple(e["categories"]) if e.get("categories") else None,
        )
        for e in doc["schema"]
    ]
    return model, schema, stats, doc["auc_head"], doc.get("config", {})


def write_trace(path, trace: list[dict]) -> None:
    """Line-delimited JSON training trace."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in trace:
            fh.write(json.dumps(record) + "\n")
