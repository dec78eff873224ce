"""Uniform-grid machinery and executable verification of its counting bounds.

``[0,1]^D`` is partitioned into ``S^D`` hypercubes of width 1/S (half-open,
last one closed).  Buyers map to buckets ``(lam, mu)``: the cube indices of
their rectangle corners.  A policy rounds down to the grid via the operator
implemented in :func:`round_policy_T`, which prices each coarse cube at the
minimum of the policy over it.

A bucket is *violating* for a policy when some buyer mapped to it earns the
seller strictly more under the policy than under its rounded version; the
whole consistency argument rests on such buckets being rare.  This module
decides violation exactly for piecewise-constant policies and verifies all
the combinatorial devices that bound the violating set: the boundary-face
necessary condition, anchor counts, line covers, face inclusion under line
shifts, thin-bucket counts, and the per-direction cardinality bound, plus
the closed-form vanishing ratio they imply.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Buyer, GridPolicy, Sample, cube_indices, revenues

__all__ = [
    "BoundReport",
    "CheckResult",
    "anchors",
    "violating_ratio_bound",
    "bucket_conditional_objective",
    "bucket_of",
    "bucket_probability_estimate",
    "cube_index",
    "face_cubes",
    "is_violating_bucket",
    "iter_buckets",
    "line_from",
    "rect_cubes",
    "round_policy_T",
    "verify_combinatorics",
    "violating_buckets",
]

Cube = tuple[int, ...]
Bucket = tuple[Cube, Cube]


def cube_index(x: Sequence[float], s: int) -> Cube:
    """1-based index of the hypercube containing x (last cell closed)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single point")
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError(f"point {x.tolist()} outside [0, 1]^D")
    return tuple(int(i) for i in cube_indices(x, s))


def bucket_of(buyer: Buyer, s: int) -> Bucket:
    """The bucket a buyer maps to: cube indices of its rectangle corners."""
    return cube_index(buyer.lower, s), cube_index(buyer.upper, s)


def _check_bucket(bucket: Bucket, s: int) -> tuple[Cube, Cube]:
    lam, mu = bucket
    lam, mu = tuple(int(i) for i in lam), tuple(int(i) for i in mu)
    if len(lam) != len(mu):
        raise ValueError("bucket corners differ in dimension")
    for l, u in zip(lam, mu):
        if not (1 <= l <= u <= s):
            raise ValueError(f"bucket {bucket} invalid for resolution {s}")
    return lam, mu


def rect_cubes(lam: Cube, mu: Cube) -> np.ndarray:
    """All cubes of the integer box ``lam <= sigma <= mu``, shape (n, D)."""
    lam, mu = _check_bucket((lam, mu), max(mu))
    ranges = [np.arange(l, u + 1) for l, u in zip(lam, mu)]
    grids = np.meshgrid(*ranges, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _face_box(lam: Cube, mu: Cube, delta: Cube) -> tuple[Cube, Cube] | None:
    lo, hi = [], []
    for l, u, dl in zip(lam, mu, delta):
        if dl == -1:
            a = b = l
        elif dl == 1:
            a = b = u
        elif dl == 0:
            a, b = l + 1, u - 1
        else:
            raise ValueError(f"face direction {delta} not in {{-1,0,1}}^D")
        if a > b:
            return None
        lo.append(a)
        hi.append(b)
    return tuple(lo), tuple(hi)


def face_cubes(lam: Cube, mu: Cube, delta: Cube) -> np.ndarray:
    """Cubes of the delta-face of the bucket's rectangle; may be empty.

    Coordinates are pinned to the lam side where delta is -1, to the mu side
    where +1, and range over the strict interior where 0.
    """
    if len(delta) != len(lam):
        raise ValueError("face direction has wrong dimension")
    box = _face_box(lam, mu, delta)
    if box is None:
        return np.empty((0, len(lam)), dtype=np.int64)
    return rect_cubes(*box)


def round_policy_T(policy: GridPolicy, s: int) -> GridPolicy:
    """Round a fine policy down to resolution ``s``: each coarse cube gets
    the minimum price over its fine subcubes.  Idempotent, pointwise <=."""
    s = int(s)
    if s < 1 or policy.resolution % s != 0:
        raise ValueError(
            f"target resolution {s} must divide policy resolution {policy.resolution}"
        )
    r = policy.resolution // s
    d = policy.dimension
    table = policy.table
    shape = ()
    for _ in range(d):
        shape += (s, r)
    blocked = table.reshape(shape)
    coarse = blocked.min(axis=tuple(range(1, 2 * d, 2)))
    return GridPolicy.from_table(coarse, policy.grid)


def _min_over_index_box(table: np.ndarray, lo: Cube, hi: Cube) -> int:
    block = table[tuple(slice(a - 1, b) for a, b in zip(lo, hi))]
    return int(block.min())


def is_violating_bucket(policy: GridPolicy, s: int, bucket: Bucket) -> bool:
    """Exact test of whether the bucket is violating for the policy.

    Some buyer in the bucket earns strictly more under the policy than under
    its rounding iff the minimum of the policy over the buyer's rectangle
    can exceed the rounded minimum.  The rectangle minimum depends only on
    the fine subcells containing the corners, so the supremum over buyers is
    attained by enumerating corner subcells (the valuation drops out: taking
    v = 1 activates both purchase indicators and maximizes the gap).
    """
    if policy.resolution % s != 0:
        raise ValueError(
            f"grid resolution {s} must divide policy resolution {policy.resolution}"
        )
    lam, mu = _check_bucket(bucket, s)
    r = policy.resolution // s
    table = policy.table

    coarse_lo = tuple((l - 1) * r + 1 for l in lam)
    coarse_hi = tuple(u * r for u in mu)
    rounded_min = _min_over_index_box(table, coarse_lo, coarse_hi)

    choices: list[list[tuple[int, int]]] = []
    for l, u in zip(lam, mu):
        if l < u:
            # Any corner picks contain this tightest core range.
            choices.append([(l * r, (u - 1) * r + 1)])
        else:
            base = (l - 1) * r
            choices.append(
                [(base + a, base + b) for a in range(1, r + 1) for b in range(a, r + 1)]
            )
    best = -1
    for combo in itertools.product(*choices):
        lo = tuple(c[0] for c in combo)
        hi = tuple(c[1] for c in combo)
        best = max(best, _min_over_index_box(table, lo, hi))
    return best > rounded_min


def iter_buckets(s: int, d: int, min_gap: int = 0) -> Iterable[Bucket]:
    """All buckets at resolution ``s`` whose every per-dimension gap is
    at least ``min_gap`` (0 yields the full bucket set)."""
    pairs = [(l, u) for l in range(1, s + 1) for u in range(l, s + 1) if u - l >= min_gap]
    for combo in itertools.product(pairs, repeat=d):
        yield tuple(c[0] for c in combo), tuple(c[1] for c in combo)


def violating_buckets(policy: GridPolicy, s: int) -> list[Bucket]:
    """All violating buckets of the policy at resolution ``s``."""
    return [
        b
        for b in iter_buckets(s, policy.dimension)
        if is_violating_bucket(policy, s, b)
    ]


def _is_anchor(lam: Cube, mu: Cube, delta: Cube, s: int) -> bool:
    return any(
        (dl == 1 and l == 1) or (dl == -1 and u == s)
        for l, u, dl in zip(lam, mu, delta)
    )


def anchors(s: int, m: int, delta: Cube) -> list[Bucket]:
    """All delta-anchors: wide buckets pinned to the boundary against delta.

    A bucket with every gap >= m anchors direction delta when some
    coordinate with delta=+1 starts at 1 or some coordinate with delta=-1
    ends at s.  At most D * S^(2D-1) anchors exist.
    """
    delta = tuple(int(x) for x in delta)
    if any(x not in (-1, 0, 1) for x in delta):
        raise ValueError(f"face direction {delta} not in {{-1,0,1}}^D")
    if all(x == 0 for x in delta):
        raise ValueError("delta must be nonzero")
    if m < 1:
        raise ValueError("m must be >= 1")
    return [
        (lam, mu)
        for lam, mu in iter_buckets(s, len(delta), min_gap=m)
        if _is_anchor(lam, mu, delta, s)
    ]


def line_from(anchor: Bucket, delta: Cube, s: int, m: int) -> list[Bucket]:
    """The delta-line from an anchor: shift both corners by delta until an
    index leaves {1..s}.  Gaps are shift-invariant, so the run stays wide."""
    lam, mu = _check_bucket(anchor, s)
    delta = tuple(int(x) for x in delta)
    if min(u - l for l, u in zip(lam, mu)) < m or not _is_anchor(lam, mu, delta, s):
        raise ValueError(f"{anchor} is not a delta-anchor for delta={delta}")
    line = []
    iota = 0
    while True:
        nl = tuple(l + iota * dl for l, dl in zip(lam, delta))
        nu = tuple(u + iota * dl for u, dl in zip(mu, delta))
        if any(not (1 <= a <= s) for a in nl + nu):
            break
        line.append((nl, nu))
        iota += 1
    assert len(line) <= s
    return line


def bucket_conditional_objective(
    policy: GridPolicy, sample: Sample, s: int, bucket: Bucket
) -> float:
    """Mean revenue over the sample's buyers mapped to the bucket (0 if none)."""
    lam, mu = _check_bucket(bucket, s)
    lam_arr = cube_indices(sample.lowers, s)
    mu_arr = cube_indices(sample.uppers, s)
    mask = np.all(lam_arr == np.asarray(lam), axis=1) & np.all(
        mu_arr == np.asarray(mu), axis=1
    )
    if not mask.any():
        return 0.0
    r = revenues(
        policy, sample.lowers[mask], sample.uppers[mask], sample.valuations[mask]
    )
    return math.fsum(r.tolist()) / int(mask.sum())


def bucket_probability_estimate(
    sampler: Callable[[int, int], Sample], s: int, bucket: Bucket, draws: int, seed: int
) -> float:
    """Monte Carlo estimate of the probability that a fresh buyer maps to
    the bucket; reproducible under the seed."""
    if draws < 1:
        raise ValueError("draws must be >= 1")
    lam, mu = _check_bucket(bucket, s)
    sample = sampler(draws, seed)
    lam_arr = cube_indices(sample.lowers, s)
    mu_arr = cube_indices(sample.uppers, s)
    mask = np.all(lam_arr == np.asarray(lam), axis=1) & np.all(
        mu_arr == np.asarray(mu), axis=1
    )
    return float(mask.sum()) / draws


def violating_ratio_bound(s: int, d: int, k: int) -> float:
    """Closed-form bound on the violating-bucket ratio |A| / S^(2D) obtained
    by balancing thin-bucket and per-direction counts at M = ceil(sqrt(S))."""
    root = math.isqrt(s)
    if root * root < s:
        root += 1
    return (d / s) * (root + (3**d - 1) * 2 * k * s / root)


@dataclass(frozen=True)
class CheckResult:
    """One verified bound: measured quantity against its theoretical cap."""

    check: str
    instances: int
    max_measured: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "instances": self.instances,
            "max_measured": self.max_measured,
            "bound": self.bound,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class BoundReport:
    """Outcome of one verification run at fixed (S, M, K)."""

    s: int
    m: int
    dimension: int
    k: int
    n_policies: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "m": self.m,
            "dimension": self.dimension,
            "k": self.k,
            "n_policies": self.n_policies,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def _nonzero_deltas(d: int) -> list[Cube]:
    return [dl for dl in itertools.product((-1, 0, 1), repeat=d) if any(dl)]


def _face_min(coarse: np.ndarray, lam: Cube, mu: Cube, delta: Cube) -> float:
    box = _face_box(lam, mu, delta)
    if box is None:
        return math.inf
    return float(_min_over_index_box(coarse, *box))


def _structure_checks(s: int, m: int, d: int) -> list[CheckResult]:
    """Policy-independent counting and covering checks."""
    checks = []
    deltas = _nonzero_deltas(d)
    wide = list(iter_buckets(s, d, min_gap=m))
    wide_set = set(wide)

    anchor_bound = d * s ** (2 * d - 1)
    max_anchors = 0
    uncovered = 0
    bad_inclusions = 0
    pairs_checked = 0
    for delta in deltas:
        anc = anchors(s, m, delta)
        max_anchors = max(max_anchors, len(anc))
        covered = set()
        for a in anc:
            line = line_from(a, delta, s, m)
            covered.update(line)
            for i, b1 in enumerate(line):
                for shift in range(1, m):
                    if i + shift >= len(line):
                        break
                    b2 = line[i + shift]
                    pairs_checked += 1
                    f1 = {tuple(c) for c in face_cubes(*b1, delta)}
                    f0 = {tuple(c) for c in face_cubes(*b2, (0,) * d)}
                    if not f1 <= f0:
                        bad_inclusions += 1
        uncovered += len(wide_set - covered)

    checks.append(
        CheckResult("anchor_count", len(deltas), max_anchors, anchor_bound, max_anchors <= anchor_bound)
    )
    checks.append(CheckResult("line_cover", len(deltas), uncovered, 0, uncovered == 0))
    checks.append(
        CheckResult("face_inclusion", pairs_checked, bad_inclusions, 0, bad_inclusions == 0)
    )

    n_buckets = (s * (s + 1) // 2) ** d
    n_thin = n_buckets - len(wide)
    thin_bound = m * d * s ** (2 * d - 1)
    checks.append(CheckResult("thin_bucket_count", 1, n_thin, thin_bound, n_thin <= thin_bound))
    return checks


def _policy_checks_generic(
    s: int, m: int, k: int, policies: Sequence[GridPolicy]
) -> list[CheckResult]:
    d = policies[0].dimension
    deltas = _nonzero_deltas(d)
    all_buckets = list(iter_buckets(s, d))
    wide = [b for b in all_buckets if min(u - l for l, u in zip(*b)) >= m]
    zero = (0,) * d

    # Per-delta line structure, shared across policies.
    lines_by_delta = {
        delta: [line_from(a, delta, s, m) for a in anchors(s, m, delta)]
        for delta in deltas
    }

    necessity_instances = 0
    necessity_failures = 0
    max_a_delta = 0
    sep_pairs = 0
    sep_violations = 0
    max_ratio = 0.0

    for policy in policies:
        coarse = round_policy_T(policy, s).table
        fm0 = {b: _face_min(coarse, *b, zero) for b in all_buckets}
        fmd = {
            (b, delta): _face_min(coarse, *b, delta)
            for b in wide
            for delta in deltas
        }

        violating = [b for b in all_buckets if is_violating_bucket(policy, s, b)]
        necessity_instances += len(violating)
        for b in violating:
            boundary_min = min(_face_min(coarse, *b, delta) for delta in deltas)
            if not fm0[b] > boundary_min:
                necessity_failures += 1
        max_ratio = max(max_ratio, len(violating) / s ** (2 * d))

        for delta in deltas:
            members = {b for b in wide if fm0[b] > fmd[(b, delta)]}
            max_a_delta = max(max_a_delta, len(members))
            for level in range(k):
                level_members = {b for b in members if fm0[b] == level}
                for line in lines_by_delta[delta]:
                    hits = [i for i, b in enumerate(line) if b in level_members]
                    for a, b2 in itertools.combinations(hits, 2):
                        sep_pairs += 1
                        if b2 - a < m:
                            sep_violations += 1

    undercut_bound = 2 * d * k * s ** (2 * d) / m
    beta = violating_ratio_bound(s, d, k)
    return [
        CheckResult(
            "boundary_face_necessity", necessity_instances, necessity_failures, 0, necessity_failures == 0
        ),
        CheckResult(
            "face_undercut_count", len(policies) * len(deltas), max_a_delta, undercut_bound,
            max_a_delta <= undercut_bound,
        ),
        CheckResult("m_separation", sep_pairs, sep_violations, 0, sep_violations == 0),
        CheckResult("violating_ratio", len(policies), max_ratio, beta, max_ratio <= beta),
    ]


def _policy_checks_1d(
    s: int, m: int, tables: np.ndarray, price_k: int
) -> list[CheckResult]:
    """Vectorized 1-D variant of :func:`_policy_checks_generic` over a stack
    of fine policy tables (price indices, shape (P, r*s))."""
    p, s_fine = tables.shape
    r = s_fine // s
    coarse = tables.reshape(p, s, r).min(axis=2).astype(np.float64)
    cellmax = tables.reshape(p, s, r).max(axis=2)

    def range_min(a: int, b: int) -> np.ndarray:  # 1-based coarse cells a..b
        return coarse[:, a - 1 : b].min(axis=1)

    all_buckets = [((l,), (u,)) for l in range(1, s + 1) for u in range(l, s + 1)]
    viol = {}
    n_violating = np.zeros(p, dtype=np.int64)
    necessity_failures = 0
    necessity_instances = 0
    for (l,), (u,) in all_buckets:
        rounded_min = tables[:, (l - 1) * r : u * r].min(axis=1)
        if l < u:
            best = tables[:, l * r - 1 : (u - 1) * r + 1].min(axis=1)
        else:
            best = cellmax[:, l - 1]
        v = best > rounded_min
        viol[((l,), (u,))] = v
        n_violating += v
        fm0 = range_min(l + 1, u - 1) if l + 1 <= u - 1 else np.full(p, np.inf)
        boundary = np.minimum(coarse[:, l - 1], coarse[:, u - 1])
        necessity_instances += int(v.sum())
        necessity_failures += int((v & ~(fm0 > boundary)).sum())

    max_ratio = float(n_violating.max()) / s**2 if p else 0.0

    wide = [((l,), (u,)) for (l,), (u,) in all_buckets if u - l >= m]
    member_masks: dict[tuple[Bucket, Cube], np.ndarray] = {}
    max_a_delta = 0
    for delta in ((-1,), (1,)):
        for (l,), (u,) in wide:
            fm0 = range_min(l + 1, u - 1) if l + 1 <= u - 1 else np.full(p, np.inf)
            fmd = coarse[:, (l if delta[0] == -1 else u) - 1]
            member_masks[(((l,), (u,)), delta)] = fm0 > fmd
        if wide:
            counts = np.zeros(p, dtype=np.int64)
            for b in wide:
                counts += member_masks[(b, delta)]
            max_a_delta = max(max_a_delta, int(counts.max()))

    sep_pairs = 0
    sep_violations = 0
    for delta in ((-1,), (1,)):
        lines = [line_from(a, delta, s, m) for a in anchors(s, m, delta)]
        for line in lines:
            masks = np.stack([member_masks[(b, delta)] for b in line], axis=1)
            fm0s = np.stack(
                [
                    range_min(b[0][0] + 1, b[1][0] - 1)
                    if b[0][0] + 1 <= b[1][0] - 1
                    else np.full(p, np.inf)
                    for b in line
                ],
                axis=1,
            )
            for level in range(price_k):
                lv = masks & (fm0s == level)
                for shift in range(1, len(line)):
                    both = lv[:, :-shift] & lv[:, shift:]
                    n_both = int(both.sum())
                    sep_pairs += n_both
                    if shift < m:
                        sep_violations += n_both

    undercut_bound = 2 * price_k * s**2 / m
    beta = violating_ratio_bound(s, 1, price_k)
    return [
        CheckResult(
            "boundary_face_necessity", necessity_instances, necessity_failures, 0, necessity_failures == 0
        ),
        CheckResult("face_undercut_count", p * 2, max_a_delta, undercut_bound, max_a_delta <= undercut_bound),
        CheckResult("m_separation", sep_pairs, sep_violations, 0, sep_violations == 0),
        CheckResult("violating_ratio", p, max_ratio, beta, max_ratio <= beta),
    ]


def verify_combinatorics(
    s: int,
    m: int,
    policies: Sequence[GridPolicy] | np.ndarray,
    k: int,
) -> BoundReport:
    """Verify every counting device at (S, M) against the given policies.

    ``policies`` is either a sequence of :class:`GridPolicy` at a resolution
    divisible by ``s``, or (for dimension 1 only) an integer array of shape
    (n_policies, fine_resolution) of price-index tables, which enables the
    vectorized fast path used by exhaustive policy enumeration.
    """
    if not 1 <= m <= s - 1:
        raise ValueError(f"m must lie in 1..{s - 1}, got {m}")
    if isinstance(policies, np.ndarray):
        tables = np.asarray(policies, dtype=np.int64)
        if tables.ndim != 2 or tables.shape[1] % s != 0:
            raise ValueError("policy table stack must be (P, r*s) shaped")
        d = 1
        n_policies = tables.shape[0]
        policy_checks = _policy_checks_1d(s, m, tables, k)
    else:
        policies = list(policies)
        if not policies:
            raise ValueError("at least one policy is required")
        d = policies[0].dimension
        for pol in policies:
            if pol.dimension != d:
                raise ValueError("policies have inconsistent dimensions")
            if pol.resolution % s != 0:
                raise ValueError(
                    f"policy resolution {pol.resolution} not divisible by {s}"
                )
        n_policies = len(policies)
        if d == 1:
            tables = np.stack([pol.table for pol in policies])
            policy_checks = _policy_checks_1d(s, m, tables, k)
        else:
            policy_checks = _policy_checks_generic(s, m, k, policies)

    checks = _structure_checks(s, m, d) + policy_checks
    return BoundReport(s, m, d, k, n_policies, tuple(checks))
