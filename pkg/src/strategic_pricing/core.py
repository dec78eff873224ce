"""Domain types and revenue semantics for pricing strategic buyers.

A buyer is a feature hyperrectangle ``[lower, upper]`` inside ``[0,1]^D``
together with a valuation ``v`` in ``[0,1]``.  Facing a pricing policy
``pi``, the buyer reveals whichever feature vector in the rectangle
minimizes the offered price and purchases iff that minimum price is at
most ``v`` (ties buy).  The seller's revenue from one buyer is therefore

    revenue(pi, buyer) = m * 1{m <= v},    m = min over [lower, upper] of pi

and the empirical objective of a sample is the mean revenue over its buyers.

Policies are piecewise constant, either on the uniform S-grid of hypercubes
(:class:`GridPolicy`) or on the arrangement regions of a sample
(:class:`RegionPolicy`).  Prices live on a finite ordered grid
(:class:`PriceGrid`); :func:`discretize_prices` reduces an arbitrary closed
price set to such a grid with at most ``1/K`` rounding loss, and
:func:`round_prices_down` applies that rounding to a policy.

All types are immutable after construction and every operation here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np

if TYPE_CHECKING:
    from .geometry import Arrangement

__all__ = [
    "Buyer",
    "DimensionMismatchError",
    "GridPolicy",
    "Interval",
    "PriceGrid",
    "RegionPolicy",
    "Sample",
    "SampleMeta",
    "cube_indices",
    "discretize_prices",
    "empirical_objective",
    "min_price_over_rect",
    "revenue",
    "revenues",
    "round_prices_down",
]


class DimensionMismatchError(ValueError):
    """A box or point does not match the dimension of the policy."""


def _as_unit_coords(values, name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise ValueError(f"{name} coordinate {v!r} outside [0, 1]")
    return out


def cube_indices(x: np.ndarray, s: int) -> np.ndarray:
    """1-based hypercube indices of points: ``sigma = min(floor(x*s) + 1, s)``.

    Cells are half-open with the last one closed, so x=1 maps to index s.
    This formula is the single membership convention; boundary decisions are
    always made through it rather than by comparing against k/s directly.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.minimum(np.floor(x * s).astype(np.int64) + 1, s)


@dataclass(frozen=True)
class Buyer:
    """One buyer realization: rectangle ``[lower, upper]`` plus a valuation.

    ``lower == upper`` (a degenerate point rectangle) is allowed and models
    the non-strategic regime.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    valuation: float

    def __post_init__(self) -> None:
        lo = _as_unit_coords(self.lower, "lower")
        up = _as_unit_coords(self.upper, "upper")
        if len(lo) != len(up):
            raise DimensionMismatchError(
                f"lower has dimension {len(lo)}, upper has {len(up)}"
            )
        if any(l > u for l, u in zip(lo, up)):
            raise ValueError(f"lower {lo} exceeds upper {up} in some dimension")
        v = float(self.valuation)
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise ValueError(f"valuation {v!r} outside [0, 1]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "valuation", v)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True)
class SampleMeta:
    """Provenance of a sample: distribution id, radii, seed, size."""

    distribution: str = "unspecified"
    epsilon: tuple[float, ...] = ()
    seed: int = 0
    n: int = 0


@dataclass(frozen=True)
class Sample:
    """An ordered i.i.d. sample of buyers with provenance metadata."""

    buyers: tuple[Buyer, ...]
    meta: SampleMeta = SampleMeta()

    def __post_init__(self) -> None:
        buyers = tuple(self.buyers)
        if not buyers:
            raise ValueError("a sample must contain at least one buyer")
        d = buyers[0].dimension
        if any(b.dimension != d for b in buyers):
            raise DimensionMismatchError("buyers have inconsistent dimensions")
        object.__setattr__(self, "buyers", buyers)

    @property
    def n(self) -> int:
        return len(self.buyers)

    @property
    def dimension(self) -> int:
        return self.buyers[0].dimension

    @cached_property
    def lowers(self) -> np.ndarray:
        a = np.array([b.lower for b in self.buyers], dtype=np.float64)
        a.setflags(write=False)
        return a

    @cached_property
    def uppers(self) -> np.ndarray:
        a = np.array([b.upper for b in self.buyers], dtype=np.float64)
        a.setflags(write=False)
        return a

    @cached_property
    def valuations(self) -> np.ndarray:
        a = np.array([b.valuation for b in self.buyers], dtype=np.float64)
        a.setflags(write=False)
        return a


class Interval(NamedTuple):
    """A closed interval ``[lo, hi]`` used as a continuous price set."""

    lo: float
    hi: float


@dataclass(frozen=True)
class PriceGrid:
    """The finite ordered price set ``p_1 < ... < p_K`` within [0, 1].

    Positive prices are the intended domain, but 0 is admitted as ``p_1``
    because interval discretization of [0, 1] emits it; a zero price simply
    yields zero revenue.
    """

    prices: tuple[float, ...]

    def __post_init__(self) -> None:
        prices = tuple(float(p) for p in self.prices)
        if not prices:
            raise ValueError("a price grid needs at least one price")
        if any(not (0.0 <= p <= 1.0) or math.isnan(p) for p in prices):
            raise ValueError(f"prices {prices} outside [0, 1]")
        if any(a >= b for a, b in zip(prices, prices[1:])):
            raise ValueError(f"prices {prices} are not strictly increasing")
        object.__setattr__(self, "prices", prices)

    @property
    def k(self) -> int:
        return len(self.prices)

    @property
    def top(self) -> float:
        return self.prices[-1]

    @cached_property
    def _array(self) -> np.ndarray:
        a = np.array(self.prices, dtype=np.float64)
        a.setflags(write=False)
        return a

    def largest_at_most(self, value: float) -> int | None:
        """Index of the largest grid price <= value, or None if all exceed it."""
        i = int(np.searchsorted(self._array, value, side="right")) - 1
        return i if i >= 0 else None

    def largest_at_most_many(self, values: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`largest_at_most`; -1 marks 'no feasible price'."""
        return np.searchsorted(self._array, np.asarray(values), side="right") - 1


def _window_min_direct(table: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    out = np.empty(len(lo), dtype=np.float64)
    for q in range(len(lo)):
        block = table[tuple(slice(a, b + 1) for a, b in zip(lo[q], hi[q]))]
        out[q] = block.min()
    return out


def _build_sparse_min(table: np.ndarray) -> dict[tuple[int, ...], np.ndarray]:
    """Range-minimum sparse tables for every per-axis power-of-two level."""
    levels = [int(n).bit_length() - 1 for n in table.shape]
    st: dict[tuple[int, ...], np.ndarray] = {(0,) * table.ndim: table}
    for axis in range(table.ndim):
        base_keys = [k for k in list(st) if all(k[a] == 0 for a in range(axis + 1, table.ndim))]
        for key in base_keys:
            cur = st[key]
            for lev in range(1, levels[axis] + 1):
                half = 1 << (lev - 1)
                lead = cur.shape[axis] - half
                sl_a = tuple(
                    slice(0, lead) if a == axis else slice(None) for a in range(table.ndim)
                )
                sl_b = tuple(
                    slice(half, None) if a == axis else slice(None) for a in range(table.ndim)
                )
                cur = np.minimum(cur[sl_a], cur[sl_b])
                new_key = tuple(lev if a == axis else key[a] for a in range(table.ndim))
                st[new_key] = cur
    return st


def _window_min_sparse(table: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    st = _build_sparse_min(table)
    d = table.ndim
    length = hi - lo + 1
    ks = np.array([[int(n).bit_length() - 1 for n in row] for row in length], dtype=np.int64)
    out = np.full(len(lo), np.inf, dtype=np.float64)
    keys, inverse = np.unique(ks, axis=0, return_inverse=True)
    for gi, key in enumerate(keys):
        mask = inverse == gi
        qlo, qhi = lo[mask], hi[mask]
        vals = None
        # Each axis is covered by two overlapping 2^k blocks anchored at both ends.
        for corner in range(1 << d):
            idx = []
            for a in range(d):
                if corner >> a & 1:
                    idx.append(qhi[:, a] - (1 << key[a]) + 1)
                else:
                    idx.append(qlo[:, a])
            v = st[tuple(int(k) for k in key)][tuple(idx)]
            vals = v if vals is None else np.minimum(vals, v)
        out[mask] = vals
    return out


def window_min(table: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Minimum of ``table`` over the inclusive index box [lo[q], hi[q]] per query."""
    lo = np.atleast_2d(np.asarray(lo, dtype=np.int64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.int64))
    if len(lo) == 0:
        return np.empty(0, dtype=np.float64)
    table = np.asarray(table, dtype=np.float64)
    if len(lo) <= 512 or table.ndim > 2:
        return _window_min_direct(table, lo, hi)
    return _window_min_sparse(table, lo, hi)


@dataclass(frozen=True, eq=False)
class GridPolicy:
    """Pricing policy constant on each width-1/S hypercube of ``[0,1]^D``.

    ``cells`` stores one price index per hypercube in lexicographic order
    with dimension 1 fastest (Fortran ravel order of the index table).
    """

    resolution: int
    dimension: int
    grid: PriceGrid
    cells: np.ndarray

    def __post_init__(self) -> None:
        s, d = int(self.resolution), int(self.dimension)
        if s < 1 or d < 1:
            raise ValueError("resolution and dimension must be positive")
        cells = np.asarray(self.cells, dtype=np.int64).ravel()
        if cells.size != s**d:
            raise ValueError(f"expected {s**d} cells, got {cells.size}")
        if cells.min() < 0 or cells.max() >= self.grid.k:
            raise ValueError("cell price index outside the price grid")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "resolution", s)
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def constant(cls, price_idx: int, s: int, d: int, grid: PriceGrid) -> "GridPolicy":
        return cls(s, d, grid, np.full(s**d, price_idx, dtype=np.int64))

    @classmethod
    def from_table(cls, table: np.ndarray, grid: PriceGrid) -> "GridPolicy":
        """Build from a D-dim index table whose axis d indexes dimension d+1."""
        table = np.asarray(table)
        s = table.shape[0]
        if table.shape != (s,) * table.ndim:
            raise ValueError("table must be S^D shaped")
        return cls(s, table.ndim, grid, table.ravel(order="F"))

    @cached_property
    def table(self) -> np.ndarray:
        t = self.cells.reshape((self.resolution,) * self.dimension, order="F")
        t.setflags(write=False)
        return t

    @cached_property
    def price_table(self) -> np.ndarray:
        t = self.grid._array[self.table]
        t.setflags(write=False)
        return t

    def price_index_at(self, x: Sequence[float]) -> int:
        sigma = cube_indices(_as_unit_coords(x, "x"), self.resolution)
        return int(self.table[tuple(sigma - 1)])

    def price_at(self, x: Sequence[float]) -> float:
        return self.grid.prices[self.price_index_at(x)]

    def min_over_box(self, lower: Sequence[float], upper: Sequence[float]) -> float:
        lo = cube_indices(lower, self.resolution) - 1
        hi = cube_indices(upper, self.resolution) - 1
        block = self.price_table[tuple(slice(a, b + 1) for a, b in zip(lo, hi))]
        return float(block.min())

    def min_over_boxes(self, lowers: np.ndarray, uppers: np.ndarray) -> np.ndarray:
        lo = cube_indices(lowers, self.resolution) - 1
        hi = cube_indices(uppers, self.resolution) - 1
        return window_min(self.price_table, lo, hi)

    def with_prices(self, grid: PriceGrid, cells: np.ndarray) -> "GridPolicy":
        return GridPolicy(self.resolution, self.dimension, grid, cells)


@dataclass(frozen=True, eq=False)
class RegionPolicy:
    """Piecewise-constant policy on the arrangement regions of a sample.

    Feature vectors covered by no region (cell boundaries and the complement
    of the union of buyer rectangles) are priced at ``default_idx``.  The
    solver always emits the highest grid price there, which never lowers a
    sampled buyer's offer; the choice is recorded in solver output metadata.
    """

    arrangement: "Arrangement"
    grid: PriceGrid
    region_price_idx: tuple[int, ...]
    default_idx: int

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.region_price_idx)
        if len(idx) != self.arrangement.n_regions:
            raise ValueError(
                f"expected {self.arrangement.n_regions} region prices, got {len(idx)}"
            )
        if any(not 0 <= i < self.grid.k for i in idx) or not (
            0 <= self.default_idx < self.grid.k
        ):
            raise ValueError("price index outside the price grid")
        object.__setattr__(self, "region_price_idx", idx)
        object.__setattr__(self, "default_idx", int(self.default_idx))

    @property
    def dimension(self) -> int:
        return self.arrangement.dimension

    @cached_property
    def region_prices(self) -> np.ndarray:
        a = self.grid._array[np.array(self.region_price_idx, dtype=np.int64)]
        a.setflags(write=False)
        return a

    @property
    def default_price(self) -> float:
        return self.grid.prices[self.default_idx]

    def min_over_box(self, lower: Sequence[float], upper: Sequence[float]) -> float:
        return float(
            self.arrangement.policy_min_over_boxes(
                self.region_prices,
                self.default_price,
                np.asarray([lower], dtype=np.float64),
                np.asarray([upper], dtype=np.float64),
            )[0]
        )

    def min_over_boxes(self, lowers: np.ndarray, uppers: np.ndarray) -> np.ndarray:
        return self.arrangement.policy_min_over_boxes(
            self.region_prices, self.default_price, lowers, uppers
        )


Policy = GridPolicy | RegionPolicy


def _check_box(policy: Policy, lower, upper) -> tuple[tuple[float, ...], tuple[float, ...]]:
    lo = _as_unit_coords(lower, "lower")
    up = _as_unit_coords(upper, "upper")
    if len(lo) != len(up) or len(lo) != policy.dimension:
        raise DimensionMismatchError(
            f"box dimensions ({len(lo)}, {len(up)}) do not match policy "
            f"dimension {policy.dimension}"
        )
    if any(l > u for l, u in zip(lo, up)):
        raise ValueError(f"lower {lo} exceeds upper {up} in some dimension")
    return lo, up


def min_price_over_rect(policy: Policy, lower, upper) -> float:
    """Exact minimum of the policy over the closed box ``[lower, upper]``.

    This is the price a strategic buyer with that feature rectangle obtains.
    """
    lo, up = _check_box(policy, lower, upper)
    return policy.min_over_box(lo, up)


def revenue(policy: Policy, buyer: Buyer) -> float:
    """Seller revenue from one buyer: the rectangle-minimum price if the
    buyer can afford it (valuation >= price, ties buy), else 0."""
    m = min_price_over_rect(policy, buyer.lower, buyer.upper)
    return m if m <= buyer.valuation else 0.0


def revenues(
    policy: Policy, lowers: np.ndarray, uppers: np.ndarray, valuations: np.ndarray
) -> np.ndarray:
    """Vectorized :func:`revenue` over per-buyer coordinate arrays."""
    m = policy.min_over_boxes(np.asarray(lowers), np.asarray(uppers))
    return np.where(m <= np.asarray(valuations), m, 0.0)


def empirical_objective(policy: Policy, sample: Sample) -> float:
    """Mean revenue over the sample (the SAA objective of the policy).

    Uses exactly-rounded summation so the value is independent of buyer
    order and bitwise-comparable across solver paths.
    """
    r = revenues(policy, sample.lowers, sample.uppers, sample.valuations)
    return math.fsum(r.tolist()) / sample.n


def discretize_prices(prices: Interval | Sequence[float], k: int) -> PriceGrid:
    """Reduce a closed price set to at most ``k`` grid prices.

    With thresholds ``t_j = pmin + (pmax - pmin) * (j-1)/k`` the grid keeps,
    for each j, the smallest price >= t_j; duplicates collapse.  Every price
    p of the input then has a grid price p' with ``0 <= p - p' <= 1/k``.
    The input is either a finite sequence of prices or an :class:`Interval`.
    """
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    if isinstance(prices, Interval):
        lo, hi = float(prices.lo), float(prices.hi)
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"interval [{lo}, {hi}] is not a subset of [0, 1]")
        chosen = [lo + (hi - lo) * j / k for j in range(k)]
    else:
        pool = sorted(float(p) for p in prices)
        if not pool:
            raise ValueError("empty price set")
        if pool[0] < 0.0 or pool[-1] > 1.0:
            raise ValueError("price set is not a subset of [0, 1]")
        lo, hi = pool[0], pool[-1]
        chosen = []
        for j in range(k):
            t = min(lo + (hi - lo) * j / k, hi)
            i = int(np.searchsorted(np.asarray(pool), t, side="left"))
            chosen.append(pool[i])
    return PriceGrid(tuple(sorted(set(chosen))))


def round_prices_down(policy: Policy, grid: PriceGrid) -> Policy:
    """Replace every policy price by the largest ``grid`` price not above it.

    When ``grid`` came from :func:`discretize_prices` over a superset of the
    policy's prices, the rounded policy underprices by at most 1/K and its
    revenue drops by at most 1/K per buyer.
    """

    def down(p: float) -> int:
        i = grid.largest_at_most(p)
        if i is None:
            raise ValueError(f"policy price {p} lies below the grid minimum {grid.prices[0]}")
        return i

    if isinstance(policy, GridPolicy):
        old = policy.grid._array
        mapping = np.array([down(p) for p in old], dtype=np.int64)
        return policy.with_prices(grid, mapping[policy.cells])
    if isinstance(policy, RegionPolicy):
        new_idx = tuple(down(p) for p in policy.region_prices)
        return replace(
            policy, grid=grid, region_price_idx=new_idx, default_idx=down(policy.default_price)
        )
    raise TypeError(f"unsupported policy type {type(policy).__name__}")
