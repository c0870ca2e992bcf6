"""Synthetic datasets for smoke tests and the imbalance experiments."""

from __future__ import annotations

import csv
import json

import numpy as np

from .data import ColumnSpec, Dataset, schema_to_json


def two_gaussians(
    n: int,
    pos_ratio: float,
    seed: int,
    dim: int = 2,
    separation: float = 1.6,
    noise: float = 1.0,
) -> Dataset:
    """Two overlapping Gaussian clusters with the positives as the minority
    class; the class means sit ``separation`` apart along the diagonal."""
    rng = np.random.default_rng(seed)
    n_pos = max(1, int(round(n * pos_ratio)))
    n_neg = n - n_pos
    shift = separation / np.sqrt(dim)
    pos = rng.normal(loc=shift, scale=noise, size=(n_pos, dim))
    neg = rng.normal(loc=0.0, scale=noise, size=(n_neg, dim))
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    perm = rng.permutation(n)
    return Dataset.from_arrays(X[perm], y[perm])


def smoke_schema() -> list[ColumnSpec]:
    return [
        ColumnSpec(name="amount", kind="numeric"),
        ColumnSpec(name="velocity", kind="numeric"),
        ColumnSpec(name="channel", kind="nominal", categories=("web", "app", "branch")),
        ColumnSpec(name="tier", kind="ordinal", ordering=("bronze", "silver", "gold")),
        ColumnSpec(name="status", kind="target"),
    ]


def write_smoke_csv(csv_path, schema_path, n: int = 400, seed: int = 7,
                    pos_ratio: float = 0.25) -> None:
    """Write a small mixed-type CSV (two numerics, one nominal, one ordinal,
    text target) plus its schema JSON; labels correlate with the numerics."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(n * pos_ratio))
    labels = np.array(["fraud"] * n_pos + ["legit"] * (n - n_pos))
    amount = np.where(labels == "fraud",
                      rng.normal(3.0, 1.0, n), rng.normal(0.0, 1.0, n))
    velocity = np.where(labels == "fraud",
                        rng.normal(1.5, 1.0, n), rng.normal(0.0, 1.0, n))
    channel = rng.choice(["web", "app", "branch"], size=n)
    tier = rng.choice(["bronze", "silver", "gold"], size=n)
    order = rng.permutation(n)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["amount", "velocity", "channel", "tier", "status"])
        for i in order:
            writer.writerow([f"{amount[i]:.6f}", f"{velocity[i]:.6f}",
                             channel[i], tier[i], labels[i]])
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_json(smoke_schema()), fh, indent=2)
        fh.write("\n")
