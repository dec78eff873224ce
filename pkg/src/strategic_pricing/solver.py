"""Exact maximization of the empirical revenue over pricing policies.

Assigning one price per arrangement region is enough: a buyer's offer is
the minimum price over the regions covering its rectangle, so the search
space is region price assignments rather than measurable functions.  The
solver is a deterministic depth-first branch-and-bound over those
assignments with three layers below it:

* presolve -- a fixpoint of safe reductions that fixes every region whose
  relevant buyers agree on their best attainable price (degenerate samples
  collapse entirely here);
* merging -- free regions covering exactly the same undecided buyers are
  interchangeable and collapse into one decision;
* decomposition -- remaining regions split into independent connected
  components solved separately.

Bounding is per buyer: given the partial assignment, each buyer's revenue
is capped by the best feasible price still reachable for it.  Objectives
are accumulated with exactly-rounded summation so values are
bitwise-comparable with the brute-force oracle.

The same machinery optimizes over grid-restricted policy classes (cubes
play the role of regions) and exports the region formulation as a
mixed-integer linear program in LP text format.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import GridPolicy, PriceGrid, RegionPolicy, Sample, cube_indices
from .geometry import Arrangement, build_arrangement

__all__ = [
    "InstanceTooLargeError",
    "PresolveResult",
    "SolveOptions",
    "SolveResult",
    "brute_force_saa",
    "export_milp",
    "per_buyer_upper_bound",
    "presolve",
    "solve_grid_restricted",
    "solve_saa",
    "solve_via_external_milp",
]

_BRANCH_RULES = ("members_desc", "id_asc")


class InstanceTooLargeError(ValueError):
    """Brute-force enumeration would exceed its assignment cap."""


@dataclass(frozen=True)
class SolveOptions:
    """Search budget and reporting knobs.

    ``target_gap`` is a reporting threshold used by experiment harnesses to
    filter rows; the search itself always runs to optimality unless a time
    or node limit interrupts it (stopping early at a positive gap would
    make optimal-status rows unattainable).
    """

    time_limit_ms: float = 60_000.0
    node_limit: int = 0  # 0 = unlimited
    target_gap: float = 0.005
    branch_rule: str = "members_desc"

    def __post_init__(self) -> None:
        if self.time_limit_ms < 0 or self.node_limit < 0 or self.target_gap < 0:
            raise ValueError("limits must be nonnegative")
        if self.branch_rule not in _BRANCH_RULES:
            raise ValueError(f"unknown branch rule {self.branch_rule!r}")


@dataclass(frozen=True, eq=False)
class SolveResult:
    value: float
    policy: RegionPolicy | GridPolicy | None
    status: str  # optimal | feasible_with_gap | infeasible_input
    gap: float
    nodes: int
    wall_time_ms: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "status": self.status,
            "gap": self.gap,
            "nodes": self.nodes,
            "wall_time_ms": self.wall_time_ms,
            "metadata": self.metadata,
        }


def per_buyer_upper_bound(sample: Sample, grid: PriceGrid) -> float:
    """Mean of each buyer's largest affordable grid price (0 if none).

    No policy can extract more from the sample: every buyer pays at most
    the largest price not exceeding its valuation.
    """
    jv = grid.largest_at_most_many(sample.valuations)
    vals = np.where(jv >= 0, grid._array[np.maximum(jv, 0)], 0.0)
    return math.fsum(vals.tolist()) / sample.n


# ---------------------------------------------------------------------------
# shared covering-instance form


@dataclass(eq=False)
class _CoverInstance:
    """Buyers covered by units (regions or cubes) plus price data."""

    coverage: list[np.ndarray]  # per buyer: unit ids
    members: list[np.ndarray]  # per unit: buyer ids
    jv: np.ndarray  # per buyer: best feasible price index, -1 if none
    prices: np.ndarray

    @property
    def n_buyers(self) -> int:
        return len(self.coverage)

    @property
    def n_units(self) -> int:
        return len(self.members)

    @property
    def k(self) -> int:
        return len(self.prices)


def _instance_from_arrangement(
    arrangement: Arrangement, sample: Sample, grid: PriceGrid
) -> _CoverInstance:
    coverage = [np.array(c, dtype=np.int64) for c in arrangement.coverage]
    members = [
        np.array(r.member_set, dtype=np.int64) for r in arrangement.regions
    ]
    jv = grid.largest_at_most_many(sample.valuations)
    return _CoverInstance(coverage, members, jv, grid._array.copy())


def _objective(inst: _CoverInstance, min_idx: np.ndarray) -> float:
    """Exactly-rounded mean revenue for per-buyer minimum price indices."""
    rev = np.where(
        (min_idx <= inst.jv) & (inst.jv >= 0),
        inst.prices[np.minimum(min_idx, inst.k - 1)],
        0.0,
    )
    return math.fsum(rev.tolist()) / inst.n_buyers


def _min_indices(inst: _CoverInstance, assignment: np.ndarray) -> np.ndarray:
    out = np.empty(inst.n_buyers, dtype=np.int64)
    for i, cov in enumerate(inst.coverage):
        out[i] = assignment[cov].min() if len(cov) else inst.k - 1
    return out


# ---------------------------------------------------------------------------
# presolve


@dataclass(frozen=True)
class PresolveResult:
    """Safe reductions: fixed unit prices (-1 keeps a unit free) and the
    buyers whose revenue no longer depends on free units."""

    fixed: tuple[int, ...]
    active_units: tuple[int, ...]
    resolved_buyers: tuple[int, ...]

    @property
    def fully_fixed(self) -> bool:
        return not self.active_units


def _presolve_fixpoint(inst: _CoverInstance) -> tuple[np.ndarray, np.ndarray]:
    """Iterate the identical-best-price reduction until nothing changes.

    Returns (fixed unit price indices with -1 for free, resolved mask).
    A unit is fixed to price c when every unresolved member buyer has c as
    its best attainable price: c weakly dominates any other choice for each
    of them and affects nobody else.  Units whose members are all resolved
    are fixed to the top price, which cannot lower anyone's offer.
    """
    k = inst.k
    sentinel = k  # "no fixed covering unit yet"
    fixed = np.full(inst.n_units, -1, dtype=np.int64)
    m_fixed = np.full(inst.n_buyers, sentinel, dtype=np.int64)
    free_cover = np.array([len(c) for c in inst.coverage], dtype=np.int64)

    def resolved_mask() -> np.ndarray:
        no_free = free_cover == 0
        floor_hit = m_fixed == 0
        infeasible = inst.jv < 0
        return no_free | floor_hit | infeasible

    changed = True
    while changed:
        changed = False
        resolved = resolved_mask()
        best = np.minimum(inst.jv, m_fixed)  # best attainable index per buyer
        for u in range(inst.n_units):
            if fixed[u] >= 0:
                continue
            relevant = inst.members[u][~resolved[inst.members[u]]]
            if len(relevant) == 0:
                target = k - 1
            else:
                targets = np.unique(best[relevant])
                if len(targets) != 1:
                    continue
                target = int(targets[0])
            fixed[u] = target
            changed = True
            for i in inst.members[u]:
                free_cover[i] -= 1
                if target < m_fixed[i]:
                    m_fixed[i] = target
    return fixed, resolved_mask()


def presolve(
    arrangement: Arrangement, sample: Sample, grid: PriceGrid
) -> PresolveResult:
    """Safe reductions for the region instance; never changes the optimum."""
    inst = _instance_from_arrangement(arrangement, sample, grid)
    fixed, resolved = _presolve_fixpoint(inst)
    active = tuple(int(u) for u in np.nonzero(fixed < 0)[0])
    return PresolveResult(
        fixed=tuple(int(x) for x in fixed),
        active_units=active,
        resolved_buyers=tuple(int(i) for i in np.nonzero(resolved)[0]),
    )


# ---------------------------------------------------------------------------
# branch and bound


class _Budget:
    def __init__(self, options: SolveOptions, start: float) -> None:
        self.deadline = (
            start + options.time_limit_ms / 1000.0 if options.time_limit_ms else None
        )
        self.node_limit = options.node_limit
        self.nodes = 0
        self.exhausted = False

    def tick(self) -> bool:
        """Count a node; return True while within budget."""
        self.nodes += 1
        if self.node_limit and self.nodes > self.node_limit:
            self.exhausted = True
        elif self.deadline is not None and self.nodes % 256 == 1:
            if time.perf_counter() > self.deadline:
                self.exhausted = True
        return not self.exhausted


class _Component:
    """One independent block of free units and the buyers they touch."""

    def __init__(
        self,
        inst: _CoverInstance,
        unit_ids: list[int],
        unit_members: list[np.ndarray],
        m_start: np.ndarray,
        buyers: np.ndarray,
        branch_rule: str,
    ) -> None:
        order = {
            "members_desc": sorted(
                range(len(unit_ids)), key=lambda j: (-len(unit_members[j]), unit_ids[j])
            ),
            "id_asc": sorted(range(len(unit_ids)), key=lambda j: unit_ids[j]),
        }[branch_rule]
        self.unit_ids = [unit_ids[j] for j in order]
        local = {b: i for i, b in enumerate(buyers)}
        self.members = [
            np.array([local[b] for b in unit_members[j]], dtype=np.int64)
            for j in order
        ]
        self.buyers = buyers
        self.jv = inst.jv[buyers]
        self.prices = inst.prices
        self.k = inst.k
        self.m0 = m_start[buyers].copy()

    def optimistic(self, m: np.ndarray, rem: np.ndarray) -> np.ndarray:
        """Per-buyer revenue cap: buyers with unassigned covering units may
        still be lowered to their best feasible price at or below the
        current minimum; fully-assigned buyers are fixed."""
        k = self.k
        fixed_rev = np.where(
            (m <= self.jv) & (self.jv >= 0), self.prices[np.minimum(m, k - 1)], 0.0
        )
        best = np.minimum(self.jv, m)
        open_rev = np.where(self.jv >= 0, self.prices[np.minimum(best, k - 1)], 0.0)
        return np.where(rem > 0, open_rev, fixed_rev)

    def solve(self, budget: _Budget) -> tuple[np.ndarray, float, bool]:
        """Iterative DFS branch and bound; returns (assignment, value, complete).

        Prices are tried low to high; the incumbent updates from the
        top-price completion of every node, so even an interrupted search
        returns a feasible assignment.
        """
        n_units = len(self.unit_ids)
        k = self.k
        m = self.m0.copy()
        rem = np.zeros(len(self.buyers), dtype=np.int64)
        for mem in self.members:
            np.add.at(rem, mem, 1)

        assignment = np.full(n_units, k - 1, dtype=np.int64)
        incumbent_assignment = assignment.copy()
        incumbent = -math.inf

        def completion_value() -> float:
            filled = np.minimum(m, k - 1)
            rev = np.where(
                (filled <= self.jv) & (self.jv >= 0), self.prices[filled], 0.0
            )
            return math.fsum(rev.tolist())

        def enter(depth: int) -> None:
            """Evaluate a node; push a branching frame unless it is a leaf."""
            nonlocal incumbent
            if not budget.tick():
                return
            value = completion_value()
            if value > incumbent:
                incumbent = value
                incumbent_assignment[:depth] = assignment[:depth]
                incumbent_assignment[depth:] = k - 1
            if depth < n_units:
                rem[self.members[depth]] -= 1
                frames.append([depth, 0, None])

        frames: list[list] = []  # [depth, next price, undo values or None]
        enter(0)
        while frames:
            frame = frames[-1]
            depth, q = frame[0], frame[1]
            mem = self.members[depth]
            if frame[2] is not None:
                m[mem] = frame[2]
                frame[2] = None
            if q == k or budget.exhausted:
                rem[mem] += 1
                assignment[depth] = k - 1
                frames.pop()
                continue
            frame[1] = q + 1
            assignment[depth] = q
            saved = m[mem].copy()
            m[mem] = np.minimum(saved, q)
            bound = math.fsum(self.optimistic(m, rem).tolist())
            if bound > incumbent:
                frame[2] = saved
                enter(depth + 1)
            else:
                m[mem] = saved

        complete = not budget.exhausted
        return incumbent_assignment, incumbent, complete


def _split_components(
    free_units: list[int],
    unit_members: list[np.ndarray],
) -> list[tuple[list[int], np.ndarray]]:
    """Connected components of the free-unit / unresolved-buyer graph."""
    buyer_units: dict[int, list[int]] = {}
    for j, u in enumerate(free_units):
        for b in unit_members[j]:
            buyer_units.setdefault(int(b), []).append(j)
    seen_units = set()
    components = []
    for j0 in range(len(free_units)):
        if j0 in seen_units:
            continue
        stack = [j0]
        seen_units.add(j0)
        comp_units = []
        comp_buyers = set()
        while stack:
            j = stack.pop()
            comp_units.append(j)
            for b in unit_members[j]:
                b = int(b)
                if b in comp_buyers:
                    continue
                comp_buyers.add(b)
                for j2 in buyer_units[b]:
                    if j2 not in seen_units:
                        seen_units.add(j2)
                        stack.append(j2)
        comp_units.sort()
        components.append(
            (comp_units, np.array(sorted(comp_buyers), dtype=np.int64))
        )
    return components


def _solve_cover_instance(
    inst: _CoverInstance, options: SolveOptions, start: float
) -> tuple[np.ndarray, float, float, int, bool]:
    """Presolve + merge + decompose + branch and bound on a cover instance.

    Returns (assignment, value, upper bound, nodes, complete).
    """
    fixed, resolved = _presolve_fixpoint(inst)
    assignment = fixed.copy()

    # Per-buyer price floor from the fixed part.
    sentinel = inst.k
    m_fixed = np.full(inst.n_buyers, sentinel, dtype=np.int64)
    for u in np.nonzero(fixed >= 0)[0]:
        for i in inst.members[u]:
            m_fixed[i] = min(m_fixed[i], fixed[u])

    free = [int(u) for u in np.nonzero(fixed < 0)[0]]
    budget = _Budget(options, start)
    complete = True
    if free:
        unresolved = ~resolved
        raw_members = [inst.members[u][unresolved[inst.members[u]]] for u in free]
        # Free units over identical undecided buyers are interchangeable.
        merged: dict[tuple[int, ...], list[int]] = {}
        for u, mem in zip(free, raw_members):
            merged.setdefault(tuple(int(b) for b in mem), []).append(u)
        merged_units = [
            (min(us), us, np.array(mem, dtype=np.int64))
            for mem, us in sorted(merged.items(), key=lambda kv: min(kv[1]))
        ]
        rep_ids = [t[0] for t in merged_units]
        rep_groups = {t[0]: t[1] for t in merged_units}
        rep_members = [t[2] for t in merged_units]

        for comp_units, comp_buyers in _split_components(rep_ids, rep_members):
            comp = _Component(
                inst,
                [rep_ids[j] for j in comp_units],
                [rep_members[j] for j in comp_units],
                m_fixed,
                comp_buyers,
                options.branch_rule,
            )
            comp_assignment, _, comp_complete = comp.solve(budget)
            # Even when a component hit the budget, its incumbent is a
            # feasible completion.
            for uid, q in zip(comp.unit_ids, comp_assignment):
                for u in rep_groups[uid]:
                    assignment[u] = q
            complete = complete and comp_complete

    min_idx = _min_indices(inst, assignment)
    value = _objective(inst, min_idx)
    if complete:
        upper = value
    else:
        # Root-level certificate: no policy beats the per-buyer best price.
        best = np.where(inst.jv >= 0, inst.prices[np.maximum(inst.jv, 0)], 0.0)
        upper = math.fsum(best.tolist()) / inst.n_buyers
    return assignment, value, upper, budget.nodes, complete


def _empty_input_result() -> SolveResult:
    return SolveResult(
        value=0.0,
        policy=None,
        status="infeasible_input",
        gap=0.0,
        nodes=0,
        wall_time_ms=0.0,
        metadata={"reason": "empty sample"},
    )


def solve_saa(
    sample: Sample,
    grid: PriceGrid,
    options: SolveOptions | None = None,
    arrangement: Arrangement | None = None,
) -> SolveResult:
    """Exact maximum of the empirical objective over all pricing policies.

    Optimizing over region price assignments is equivalent to optimizing
    over all measurable policies for the empirical objective; the returned
    :class:`RegionPolicy` prices uncovered territory at the top grid price.
    """
    options = options or SolveOptions()
    if sample is None or len(getattr(sample, "buyers", ())) == 0:
        return _empty_input_result()
    start = time.perf_counter()
    arrangement = arrangement or build_arrangement(sample)
    inst = _instance_from_arrangement(arrangement, sample, grid)
    assignment, value, upper, nodes, complete = _solve_cover_instance(
        inst, options, start
    )
    policy = RegionPolicy(
        arrangement=arrangement,
        grid=grid,
        region_price_idx=tuple(int(q) for q in assignment),
        default_idx=grid.k - 1,
    )
    wall = (time.perf_counter() - start) * 1000.0
    gap = 0.0 if complete else (upper - value) / max(value, 1e-9)
    return SolveResult(
        value=value,
        policy=policy,
        status="optimal" if complete else "feasible_with_gap",
        gap=gap,
        nodes=nodes,
        wall_time_ms=wall,
        metadata={"default_price": "p_K (highest)", "n_regions": arrangement.n_regions},
    )


def solve_grid_restricted(
    sample: Sample, grid: PriceGrid, s: int, options: SolveOptions | None = None
) -> SolveResult:
    """Exact optimum over policies constant on the width-1/s hypercubes.

    Cubes meeting some buyer rectangle play the role of regions; a buyer is
    covered by every cube of its bucket's integer box.  Cubes meeting no
    buyer are priced at the top grid price in the returned policy.
    """
    options = options or SolveOptions()
    if sample is None or len(getattr(sample, "buyers", ())) == 0:
        return _empty_input_result()
    if s < 1:
        raise ValueError("s must be >= 1")
    start = time.perf_counter()
    d = sample.dimension
    lam = cube_indices(sample.lowers, s) - 1
    mu = cube_indices(sample.uppers, s) - 1

    active: dict[tuple[int, ...], int] = {}
    coverage: list[np.ndarray] = []
    members_map: dict[int, list[int]] = {}
    for i in range(sample.n):
        ranges = [range(int(a), int(b) + 1) for a, b in zip(lam[i], mu[i])]
        ids = []
        for cube in itertools.product(*ranges):
            uid = active.setdefault(cube, len(active))
            ids.append(uid)
            members_map.setdefault(uid, []).append(i)
        coverage.append(np.array(sorted(ids), dtype=np.int64))
    members = [
        np.array(sorted(set(members_map[u])), dtype=np.int64)
        for u in range(len(active))
    ]
    inst = _CoverInstance(
        coverage, members, grid.largest_at_most_many(sample.valuations), grid._array.copy()
    )
    assignment, value, upper, nodes, complete = _solve_cover_instance(
        inst, options, start
    )

    table = np.full((s,) * d, grid.k - 1, dtype=np.int64)
    for cube, uid in active.items():
        table[cube] = assignment[uid]
    policy = GridPolicy.from_table(table, grid)
    wall = (time.perf_counter() - start) * 1000.0
    gap = 0.0 if complete else (upper - value) / max(value, 1e-9)
    return SolveResult(
        value=value,
        policy=policy,
        status="optimal" if complete else "feasible_with_gap",
        gap=gap,
        nodes=nodes,
        wall_time_ms=wall,
        metadata={"restriction": f"grid S={s}", "inactive_price": "p_K (highest)"},
    )


def brute_force_saa(
    sample: Sample,
    grid: PriceGrid,
    arrangement: Arrangement | None = None,
    cap: int = 10_000_000,
) -> SolveResult:
    """Exhaustive enumeration of all region price assignments (oracle).

    Enumerates the full K^R assignment space in chunks; the reported value
    is exactly-rounded and the argmax is the first maximizer in mixed-radix
    order, so results are deterministic.
    """
    if sample is None or len(getattr(sample, "buyers", ())) == 0:
        return _empty_input_result()
    start = time.perf_counter()
    arrangement = arrangement or build_arrangement(sample)
    inst = _instance_from_arrangement(arrangement, sample, grid)
    r, k = inst.n_units, inst.k
    total = k**r
    if total > cap:
        raise InstanceTooLargeError(
            f"{k}^{r} = {total} assignments exceed the cap of {cap}"
        )

    radix = k ** np.arange(r, dtype=np.int64)
    feasible_price = np.where(
        inst.jv[:, None] >= np.arange(k)[None, :], inst.prices[None, :], 0.0
    )  # revenue if buyer i ends at price level q

    best_np = -math.inf
    candidates: list[int] = []
    chunk = 1 << 15
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % k
        values = np.zeros(len(idx), dtype=np.float64)
        for i, cov in enumerate(inst.coverage):
            mins_i = digits[:, cov].min(axis=1) if len(cov) else np.full(len(idx), k - 1)
            values += feasible_price[i, mins_i]
        cmax = float(values.max())
        if cmax > best_np + 1e-9:
            candidates = []
        best_np = max(best_np, cmax)
        candidates.extend(idx[values >= best_np - 1e-9].tolist())

    # Exactly-rounded re-evaluation of near-ties picks the true maximum.
    best_value = -math.inf
    best_idx = None
    for ci in candidates:
        digits = (ci // radix) % k
        value = _objective(inst, _min_indices(inst, digits))
        if value > best_value:
            best_value, best_idx = value, ci
    digits = (best_idx // radix) % k
    policy = RegionPolicy(
        arrangement=arrangement,
        grid=grid,
        region_price_idx=tuple(int(q) for q in digits),
        default_idx=grid.k - 1,
    )
    wall = (time.perf_counter() - start) * 1000.0
    return SolveResult(
        value=best_value,
        policy=policy,
        status="optimal",
        gap=0.0,
        nodes=total,
        wall_time_ms=wall,
        metadata={"oracle": "exhaustive enumeration"},
    )


# ---------------------------------------------------------------------------
# MILP export


def _fmt(x: float) -> str:
    return f"{x:.15g}"


def export_milp(
    sample: Sample, grid: PriceGrid, arrangement: Arrangement | None = None
) -> str:
    """The region formulation as an LP-format mixed-integer program.

    Binary ``b_i_k`` marks buyer i paying price level k; binary ``l_r_k``
    assigns level k to region r (1-indexed).  Constraint families: per-buyer
    affordability caps, min-price linking against every covering region,
    coverage of the paid level, one level per region, and at most one
    purchase per buyer.  Export is one-way; nothing parses this back.
    """
    arrangement = arrangement or build_arrangement(sample)
    n, k = sample.n, grid.k
    coverage = arrangement.coverage
    v = sample.valuations

    lines = ["Maximize", " obj:"]
    terms = []
    for i in range(n):
        for kk in range(k):
            terms.append(f"{_fmt(grid.prices[kk] / n)} b_{i + 1}_{kk + 1}")
    lines[1] = " obj: " + " + ".join(terms)

    body = ["Subject To"]
    for i in range(n):
        for kk in range(k):
            cap = 1 if grid.prices[kk] <= v[i] else 0
            body.append(f" cap_{i + 1}_{kk + 1}: b_{i + 1}_{kk + 1} <= {cap}")
    for i in range(n):
        for kk in range(k):
            for rid in coverage[i]:
                lam_terms = " - ".join(
                    f"l_{rid + 1}_{kap + 1}" for kap in range(kk, k)
                )
                body.append(
                    f" minlink_{i + 1}_{kk + 1}_{rid + 1}: "
                    f"b_{i + 1}_{kk + 1} - {lam_terms} <= 0"
                )
    for i in range(n):
        for kk in range(k):
            cov_terms = " - ".join(f"l_{rid + 1}_{kk + 1}" for rid in coverage[i])
            body.append(
                f" cover_{i + 1}_{kk + 1}: b_{i + 1}_{kk + 1} - {cov_terms} <= 0"
            )
    for rid in range(arrangement.n_regions):
        assign_terms = " + ".join(f"l_{rid + 1}_{kk + 1}" for kk in range(k))
        body.append(f" assign_{rid + 1}: {assign_terms} = 1")
    for i in range(n):
        b_terms = " + ".join(f"b_{i + 1}_{kk + 1}" for kk in range(k))
        body.append(f" single_{i + 1}: {b_terms} <= 1")

    binaries = ["Binary"]
    names = [f"b_{i + 1}_{kk + 1}" for i in range(n) for kk in range(k)]
    names += [
        f"l_{rid + 1}_{kk + 1}"
        for rid in range(arrangement.n_regions)
        for kk in range(k)
    ]
    binaries.append(" " + " ".join(names))

    return "\n".join(lines + body + binaries + ["End"]) + "\n"


def solve_via_external_milp(
    sample: Sample, grid: PriceGrid, arrangement: Arrangement | None = None
) -> float:
    """Cross-check: solve the same MILP with scipy's HiGHS backend.

    Raises ImportError when scipy is unavailable; intended for optional
    round-trip validation, not as a production path.
    """
    from scipy import sparse
    from scipy.optimize import Bounds, LinearConstraint, milp

    arrangement = arrangement or build_arrangement(sample)
    n, k, r = sample.n, grid.k, arrangement.n_regions
    coverage = arrangement.coverage
    v = sample.valuations

    def b_var(i: int, kk: int) -> int:
        return i * k + kk

    def l_var(rid: int, kk: int) -> int:
        return n * k + rid * k + kk

    n_vars = n * k + r * k
    c = np.zeros(n_vars)
    for i in range(n):
        for kk in range(k):
            c[b_var(i, kk)] = -grid.prices[kk] / n  # milp minimizes

    rows, cols, vals = [], [], []
    lb, ub = [], []
    row = 0

    def add_row(entries: list[tuple[int, float]], lo: float, hi: float) -> None:
        nonlocal row
        for col, val in entries:
            rows.append(row)
            cols.append(col)
            vals.append(val)
        lb.append(lo)
        ub.append(hi)
        row += 1

    for i in range(n):
        for kk in range(k):
            for rid in coverage[i]:
                entries = [(b_var(i, kk), 1.0)]
                entries += [(l_var(rid, kap), -1.0) for kap in range(kk, k)]
                add_row(entries, -np.inf, 0.0)
            entries = [(b_var(i, kk), 1.0)]
            entries += [(l_var(rid, kk), -1.0) for rid in coverage[i]]
            add_row(entries, -np.inf, 0.0)
    for rid in range(r):
        add_row([(l_var(rid, kk), 1.0) for kk in range(k)], 1.0, 1.0)
    for i in range(n):
        add_row([(b_var(i, kk), 1.0) for kk in range(k)], -np.inf, 1.0)

    a = sparse.coo_matrix((vals, (rows, cols)), shape=(row, n_vars))
    upper = np.ones(n_vars)
    for i in range(n):
        for kk in range(k):
            if grid.prices[kk] > v[i]:
                upper[b_var(i, kk)] = 0.0  # affordability caps as bounds
    res = milp(
        c,
        constraints=LinearConstraint(a, np.array(lb), np.array(ub)),
        integrality=np.ones(n_vars),
        bounds=Bounds(np.zeros(n_vars), upper),
    )
    if not res.success:
        raise RuntimeError(f"external MILP solve failed: {res.message}")
    return -float(res.fun)
