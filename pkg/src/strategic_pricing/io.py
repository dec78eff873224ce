"""File formats: sample JSON, policy JSON, and 17-significant-digit reals.

Samples serialize as a meta header plus one row per buyer holding the
rectangle corner arrays and the valuation.  Floats are written with 17
significant digits, which round-trips IEEE doubles exactly.  Region
policies embed their sample so the arrangement can be rebuilt
deterministically on load.
"""

from __future__ import annotations

import json

import numpy as np

from .core import Buyer, GridPolicy, PriceGrid, RegionPolicy, Sample, SampleMeta
from .geometry import build_arrangement

__all__ = [
    "dump_json17",
    "policy_from_dict",
    "policy_to_dict",
    "sample_from_dict",
    "sample_to_dict",
]


def dump_json17(obj, indent: int = 0, level: int = 0) -> str:
    """JSON text with every float rendered to 17 significant digits."""
    pad = " " * (indent * (level + 1)) if indent else ""
    close_pad = " " * (indent * level) if indent else ""
    sep = ",\n" if indent else ", "
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        if obj != obj:
            return "NaN"
        return f"{obj:.17g}"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [dump_json17(x, indent, level + 1) for x in obj]
        if not items:
            return "[]"
        if indent:
            return "[\n" + sep.join(pad + it for it in items) + "\n" + close_pad + "]"
        return "[" + sep.join(items) + "]"
    if isinstance(obj, dict):
        items = [
            f"{json.dumps(str(k))}: {dump_json17(v, indent, level + 1)}"
            for k, v in obj.items()
        ]
        if not items:
            return "{}"
        if indent:
            return "{\n" + sep.join(pad + it for it in items) + "\n" + close_pad + "}"
        return "{" + sep.join(items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def sample_to_dict(sample: Sample) -> dict:
    m = sample.meta
    return {
        "meta": {
            "distribution": m.distribution,
            "epsilon": list(m.epsilon),
            "seed": m.seed,
            "n": sample.n,
        },
        "buyers": [
            {"l": list(b.lower), "u": list(b.upper), "v": b.valuation}
            for b in sample.buyers
        ],
    }


def sample_from_dict(doc: dict) -> Sample:
    meta = doc.get("meta", {})
    buyers = tuple(
        Buyer(tuple(row["l"]), tuple(row["u"]), row["v"]) for row in doc["buyers"]
    )
    return Sample(
        buyers,
        SampleMeta(
            distribution=meta.get("distribution", "unspecified"),
            epsilon=tuple(meta.get("epsilon", ())),
            seed=int(meta.get("seed", 0)),
            n=len(buyers),
        ),
    )


def policy_to_dict(policy: GridPolicy | RegionPolicy) -> dict:
    if isinstance(policy, GridPolicy):
        return {
            "type": "grid",
            "resolution": policy.resolution,
            "dimension": policy.dimension,
            "prices": list(policy.grid.prices),
            "cells": policy.cells.tolist(),
        }
    if isinstance(policy, RegionPolicy):
        return {
            "type": "region",
            "prices": list(policy.grid.prices),
            "region_prices": list(policy.region_price_idx),
            "default": policy.default_idx,
            "sample": sample_to_dict(policy.arrangement.sample),
        }
    raise TypeError(f"unsupported policy type {type(policy).__name__}")


def policy_from_dict(doc: dict) -> GridPolicy | RegionPolicy:
    grid = PriceGrid(tuple(doc["prices"]))
    if doc["type"] == "grid":
        return GridPolicy(
            doc["resolution"], doc["dimension"], grid, np.asarray(doc["cells"])
        )
    if doc["type"] == "region":
        if doc.get("sample") is None:
            raise ValueError("region policy document lacks its sample")
        sample = sample_from_dict(doc["sample"])
        arrangement = build_arrangement(sample)
        return RegionPolicy(
            arrangement, grid, tuple(doc["region_prices"]), int(doc["default"])
        )
    raise ValueError(f"unknown policy type {doc.get('type')!r}")
