"""Arrangement of the sample's buyer hyperrectangles.

Coordinate compression turns every distinct rectangle coordinate (plus 0
and 1) into per-dimension breakpoints.  The open elementary cells between
consecutive breakpoints are grouped by the exact set of buyer rectangles
containing them; each group of cells is one :class:`Region`.  Degenerate
(point) buyers contribute a dedicated point-region at their location.

A buyer's rectangle is tiled by the regions it covers, so the minimum of a
region-constant policy over the rectangle is the minimum of the covering
regions' prices.  That identity is what lets the exact solver optimize the
empirical objective over region price assignments.

Containment of a cell is decided on its open interior against closed
rectangles, which avoids ambiguity at shared boundaries.  Buyers that are
degenerate in a strict subset of dimensions have empty interior but are not
points; they are rejected because the region reduction does not cover them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Sample, window_min

__all__ = [
    "Arrangement",
    "Region",
    "build_arrangement",
    "regions_covering",
    "representative_point",
]

_POINT_CHUNK = 4_000_000  # max elements per containment broadcast


@dataclass(frozen=True)
class Region:
    """One arrangement region: a maximal set of cells with equal coverage.

    ``signature`` is the sorted set of buyers whose rectangle contains the
    region; for these axis-aligned closed rectangles the member set equals
    the signature, and both are kept to make that identity checkable.
    ``representative`` is a witness point: the midpoint of the region's
    smallest cell, or the point itself for a point-region.
    """

    id: int
    signature: tuple[int, ...]
    member_set: tuple[int, ...]
    representative: tuple[float, ...]
    is_point: bool


@dataclass(frozen=True, eq=False)
class Arrangement:
    """Region decomposition of a sample's rectangles; immutable after build."""

    dimension: int
    breakpoints: tuple[np.ndarray, ...]
    regions: tuple[Region, ...]
    coverage: tuple[tuple[int, ...], ...]
    cell_region: np.ndarray  # region id per elementary cell, -1 if uncovered
    point_coords: np.ndarray  # (P, D) coordinates of point-regions
    point_region_ids: np.ndarray  # (P,) region ids matching point_coords
    sample: Sample

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_buyers(self) -> int:
        return len(self.coverage)

    @cached_property
    def _cell_widths(self) -> tuple[np.ndarray, ...]:
        return tuple(np.diff(bp) for bp in self.breakpoints)

    def region_volumes(self) -> np.ndarray:
        """Lebesgue volume per region (0 for point-regions)."""
        vol = np.zeros(self.n_regions, dtype=np.float64)
        cell_vol = self._cell_widths[0]
        for w in self._cell_widths[1:]:
            cell_vol = np.multiply.outer(cell_vol, w)
        flat_ids = self.cell_region.ravel()
        covered = flat_ids >= 0
        np.add.at(vol, flat_ids[covered], cell_vol.ravel()[covered])
        return vol

    def signature_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for r in self.regions:
            hist[len(r.signature)] = hist.get(len(r.signature), 0) + 1
        return hist

    # -- policy evaluation ------------------------------------------------

    def _query_ranges(self, lowers: np.ndarray, uppers: np.ndarray):
        """Per-dimension cell windows and vertex windows intersecting boxes."""
        q = lowers.shape[0]
        d = self.dimension
        cell_lo = np.empty((q, d), dtype=np.int64)
        cell_hi = np.empty((q, d), dtype=np.int64)
        vert_lo = np.empty((q, d), dtype=np.int64)
        vert_hi = np.empty((q, d), dtype=np.int64)
        for dd in range(d):
            bp = self.breakpoints[dd]
            lo, hi = lowers[:, dd], uppers[:, dd]
            lo_pos = np.searchsorted(bp, lo, side="left")
            hi_pos = np.searchsorted(bp, hi, side="left")
            lo_at_vertex = bp[np.minimum(lo_pos, len(bp) - 1)] == lo
            cell_lo[:, dd] = np.where(lo_at_vertex, lo_pos, lo_pos - 1)
            cell_hi[:, dd] = hi_pos - 1
            vert_lo[:, dd] = lo_pos
            vert_hi[:, dd] = np.searchsorted(bp, hi, side="right") - 1
        return cell_lo, cell_hi, vert_lo, vert_hi

    def _points_in_boxes(
        self, point_prices: np.ndarray, lowers: np.ndarray, uppers: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Count of point-regions inside each box and their minimum price."""
        q, p = lowers.shape[0], len(self.point_coords)
        count = np.zeros(q, dtype=np.int64)
        best = np.full(q, np.inf, dtype=np.float64)
        if p == 0:
            return count, best
        step = max(1, _POINT_CHUNK // max(1, p * self.dimension))
        for start in range(0, q, step):
            sl = slice(start, start + step)
            inside = np.all(
                (self.point_coords[None, :, :] >= lowers[sl, None, :])
                & (self.point_coords[None, :, :] <= uppers[sl, None, :]),
                axis=2,
            )
            count[sl] = inside.sum(axis=1)
            masked = np.where(inside, point_prices[None, :], np.inf)
            best[sl] = masked.min(axis=1)
        return count, best

    def policy_min_over_boxes(
        self,
        region_prices: np.ndarray,
        default_price: float,
        lowers: np.ndarray,
        uppers: np.ndarray,
    ) -> np.ndarray:
        """Exact minimum over each closed box of the region-constant policy.

        Candidates are the open cells intersecting the box, the
        point-regions inside it, and the default price whenever the box
        contains a point covered by neither (a cell boundary, a vertex that
        is not a point-region, or territory outside every rectangle).
        """
        lowers = np.atleast_2d(np.asarray(lowers, dtype=np.float64))
        uppers = np.atleast_2d(np.asarray(uppers, dtype=np.float64))
        q = lowers.shape[0]
        cell_lo, cell_hi, vert_lo, vert_hi = self._query_ranges(lowers, uppers)
        has_cells = cell_lo <= cell_hi
        n_vert = np.maximum(vert_hi - vert_lo + 1, 0)
        has_vert = n_vert > 0

        out = np.full(q, np.inf, dtype=np.float64)

        # Index -1 (uncovered cell) picks the appended default price.
        cell_values = np.concatenate([region_prices, [default_price]])[self.cell_region]
        full = has_cells.all(axis=1)
        if full.any():
            out[full] = window_min(cell_values, cell_lo[full], cell_hi[full])

        # A piece mixing vertex and interval dimensions is covered by no
        # region, hence priced at the default.
        if self.dimension >= 2:
            any_other_interval = np.empty_like(has_vert)
            total_i = has_cells.sum(axis=1)
            for dd in range(self.dimension):
                any_other_interval[:, dd] = (total_i - has_cells[:, dd]) > 0
            mixed = (has_vert & any_other_interval).any(axis=1)
            out[mixed] = np.minimum(out[mixed], default_price)

        all_vert = has_vert.all(axis=1)
        if all_vert.any():
            point_prices = (
                region_prices[self.point_region_ids]
                if len(self.point_region_ids)
                else np.empty(0)
            )
            count, best = self._points_in_boxes(point_prices, lowers, uppers)
            combos = np.where(all_vert, n_vert.prod(axis=1), 0)
            out = np.minimum(out, np.where(all_vert, best, np.inf))
            bare_vertex = all_vert & (combos > count)
            out[bare_vertex] = np.minimum(out[bare_vertex], default_price)

        return out

    def policy_value_at_points(
        self, region_prices: np.ndarray, default_price: float, points: np.ndarray
    ) -> np.ndarray:
        """Pointwise value of the region-constant policy (its measurable form)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.policy_min_over_boxes(region_prices, default_price, points, points)


def build_arrangement(sample: Sample) -> Arrangement:
    """Region decomposition of the sample's rectangles via coordinate compression.

    Cells between consecutive breakpoints are grouped by the set of fat
    rectangles containing their interior; point buyers become dedicated
    point-regions.  Region ids follow the lexicographic order of each
    region's smallest cell, with point-regions after cell-regions in
    coordinate order, so rebuilds are reproducible.
    """
    d = sample.dimension
    lowers, uppers = sample.lowers, sample.uppers
    degenerate = lowers == uppers
    is_point = degenerate.all(axis=1)
    if (degenerate.any(axis=1) & ~is_point).any():
        bad = int(np.nonzero(degenerate.any(axis=1) & ~is_point)[0][0])
        raise ValueError(
            f"buyer {bad} is degenerate in some but not all dimensions; "
            "such rectangles are not supported by the region decomposition"
        )
    fat_ids = np.nonzero(~is_point)[0]
    point_ids = np.nonzero(is_point)[0]

    breakpoints = tuple(
        np.unique(np.concatenate([[0.0, 1.0], lowers[:, dd], uppers[:, dd]]))
        for dd in range(d)
    )
    n_cells = tuple(len(bp) - 1 for bp in breakpoints)

    cell_region = np.full(n_cells, -1, dtype=np.int64)
    regions: list[Region] = []
    coverage: list[list[int]] = [[] for _ in range(sample.n)]

    if len(fat_ids):
        cov = None
        for dd in range(d):
            bp = breakpoints[dd]
            lo_idx = np.searchsorted(bp, lowers[fat_ids, dd])
            hi_idx = np.searchsorted(bp, uppers[fat_ids, dd])
            cells = np.arange(n_cells[dd])
            mask = (cells[:, None] >= lo_idx[None, :]) & (cells[:, None] < hi_idx[None, :])
            if cov is None:
                cov = mask
            else:
                cov = cov[..., None, :] & mask[(None,) * dd]
        flat = cov.reshape(-1, len(fat_ids))
        occupied = flat.any(axis=1)
        if occupied.any():
            packed = np.packbits(flat[occupied], axis=1)
            _, inverse = np.unique(packed, axis=0, return_inverse=True)
            inverse = np.asarray(inverse).reshape(-1)
            occupied_flat = np.nonzero(occupied)[0]
            # Order groups by their smallest cell in C (lexicographic) order.
            n_groups = int(inverse.max()) + 1
            group_min_cell = np.full(n_groups, flat.shape[0], dtype=np.int64)
            np.minimum.at(group_min_cell, inverse, occupied_flat)
            order = np.argsort(group_min_cell, kind="stable")
            rank = np.empty_like(order)
            rank[order] = np.arange(len(order))
            cell_region.ravel()[occupied_flat] = rank[inverse]
            for rid in range(len(order)):
                gi = int(order[rid])
                anchor_cell = int(group_min_cell[gi])
                sig_local = np.nonzero(flat[anchor_cell])[0]
                sig = tuple(int(fat_ids[i]) for i in sig_local)
                js = np.unravel_index(anchor_cell, n_cells)
                rep = tuple(
                    float((breakpoints[dd][j] + breakpoints[dd][j + 1]) / 2.0)
                    for dd, j in enumerate(js)
                )
                regions.append(Region(rid, sig, sig, rep, is_point=False))
                for i in sig:
                    coverage[i].append(rid)

    if len(point_ids):
        pts = {}
        for i in point_ids:
            pts.setdefault(tuple(lowers[i]), []).append(int(i))
        point_coord_list = sorted(pts)
        pc = np.array(point_coord_list, dtype=np.float64).reshape(len(point_coord_list), d)
        inside = np.all(
            (lowers[None, :, :] <= pc[:, None, :]) & (uppers[None, :, :] >= pc[:, None, :]),
            axis=2,
        )
        point_region_ids = []
        for row, coord in zip(inside, point_coord_list):
            rid = len(regions)
            sig = tuple(int(i) for i in np.nonzero(row)[0])
            rep = tuple(float(c) for c in coord)
            regions.append(Region(rid, sig, sig, rep, is_point=True))
            point_region_ids.append(rid)
            for i in sig:
                coverage[i].append(rid)
        point_coords = pc
        point_region_arr = np.array(point_region_ids, dtype=np.int64)
    else:
        point_coords = np.empty((0, d), dtype=np.float64)
        point_region_arr = np.empty(0, dtype=np.int64)

    cell_region.setflags(write=False)
    point_coords.setflags(write=False)
    point_region_arr.setflags(write=False)
    for bp in breakpoints:
        bp.setflags(write=False)
    return Arrangement(
        dimension=d,
        breakpoints=breakpoints,
        regions=tuple(regions),
        coverage=tuple(tuple(sorted(c)) for c in coverage),
        cell_region=cell_region,
        point_coords=point_coords,
        point_region_ids=point_region_arr,
        sample=sample,
    )


def regions_covering(arrangement: Arrangement, buyer_id: int) -> tuple[int, ...]:
    """Region ids tiling the buyer's rectangle (the covering collection).

    The minimum of a region-constant policy over the buyer's rectangle is
    the minimum of these regions' prices.
    """
    if not 0 <= buyer_id < arrangement.n_buyers:
        raise IndexError(f"buyer id {buyer_id} out of range")
    return arrangement.coverage[buyer_id]


def representative_point(arrangement: Arrangement, region_id: int) -> tuple[float, ...]:
    """A witness point of the region: membership tests against all buyer
    rectangles at this point reproduce the region's member set."""
    if not 0 <= region_id < arrangement.n_regions:
        raise IndexError(f"region id {region_id} out of range")
    return arrangement.regions[region_id].representative
