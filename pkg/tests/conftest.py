"""Shared helpers: instance generators and slow reference implementations."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from strategic_pricing.core import Buyer, PriceGrid, Sample

PRICE_POOL = (0.25, 0.5, 0.65, 0.75, 0.83)


def random_instance(rng, max_n=6, dims=(1, 2), ks=(2, 3), point_prob=0.3, round_to=3):
    """A small random sample plus price grid, biased toward overlaps."""
    d = int(rng.choice(dims))
    n = int(rng.integers(1, max_n + 1))
    k = int(rng.choice(ks))
    buyers = []
    for _ in range(n):
        if rng.random() < point_prob:
            x = np.round(rng.random(d), round_to)
            lo = hi = tuple(x)
        else:
            c = rng.random(d)
            e = rng.random(d) * 0.35
            lo = tuple(np.round(np.clip(c - e, 0, 1), round_to))
            hi = tuple(np.round(np.clip(c + e, 0, 1), round_to))
            if any(a == b for a, b in zip(lo, hi)):
                hi = lo  # collapse near-degenerate draws to full points
        buyers.append(Buyer(lo, hi, float(np.round(rng.random(), round_to))))
    grid = PriceGrid(tuple(sorted(rng.choice(PRICE_POOL, size=k, replace=False))))
    return Sample(tuple(buyers)), grid


def fat_instance(rng, n, d=1, k=2, spread=0.35, round_to=3):
    """Overlap-heavy sample without point buyers."""
    buyers = []
    for _ in range(n):
        c = rng.random(d)
        e = 0.02 + rng.random(d) * spread
        lo = tuple(np.round(np.clip(c - e, 0, 1), round_to))
        hi = tuple(np.round(np.clip(c + e, 0, 1), round_to))
        if any(a == b for a, b in zip(lo, hi)):
            continue
        buyers.append(Buyer(lo, hi, float(np.round(rng.random(), round_to))))
    if not buyers:
        buyers.append(Buyer((0.2,) * d, (0.8,) * d, 0.7))
    grid = PriceGrid(tuple(sorted(rng.choice(PRICE_POOL, size=k, replace=False))))
    return Sample(tuple(buyers)), grid


def region_policy_reference_min(arrangement, region_prices, default_price, lo, hi):
    """Piece-by-piece reference for the region-policy box minimum.

    Enumerates every elementary piece (products of breakpoint vertices and
    open intervals) intersecting the closed box and values it exactly:
    full-dimensional pieces carry their cell's region price, vertices carry
    a point-region price when one sits there, everything else the default.
    """
    d = arrangement.dimension
    point_lookup = {
        tuple(c): int(r)
        for c, r in zip(arrangement.point_coords, arrangement.point_region_ids)
    }
    per_dim = []
    for dd in range(d):
        bp = arrangement.breakpoints[dd]
        pieces = []  # (kind, payload): vertex -> coordinate, cell -> index
        for j, b in enumerate(bp):
            if lo[dd] <= b <= hi[dd]:
                pieces.append(("vertex", j))
        for j in range(len(bp) - 1):
            if bp[j] < hi[dd] and bp[j + 1] > lo[dd]:
                pieces.append(("cell", j))
        per_dim.append(pieces)
    best = np.inf
    for combo in itertools.product(*per_dim):
        kinds = {kind for kind, _ in combo}
        if kinds == {"cell"}:
            rid = arrangement.cell_region[tuple(j for _, j in combo)]
            value = region_prices[rid] if rid >= 0 else default_price
        elif kinds == {"vertex"}:
            coord = tuple(
                float(arrangement.breakpoints[dd][j]) for dd, (_, j) in enumerate(combo)
            )
            rid = point_lookup.get(coord)
            value = region_prices[rid] if rid is not None else default_price
        else:
            value = default_price
        best = min(best, value)
    return best


def union_volume_inclusion_exclusion(lowers, uppers):
    """Exact union volume of closed boxes by inclusion-exclusion."""
    n = len(lowers)
    total = 0.0
    for mask in range(1, 1 << n):
        ids = [i for i in range(n) if mask >> i & 1]
        lo = np.max([lowers[i] for i in ids], axis=0)
        hi = np.min([uppers[i] for i in ids], axis=0)
        if np.any(lo > hi):
            continue
        vol = float(np.prod(hi - lo))
        total += vol if len(ids) % 2 == 1 else -vol
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20_240_817)
