"""Buyer distributions, out-of-sample evaluation, and the checkerboard probe.

Three samplers cover the experiment suite:

* ``rect_uniform`` -- centers uniform on [0.1, 0.9]^2, rectangle radii
  ``epsilon`` per dimension, valuation l1(1-l1) + l2(1-l2) + u1(1-u1)
  + u2(1-u2); the strategic/non-strategic pair comes from epsilon =
  (0.09, 0.09) versus (0, 0).
* ``example1`` -- one feature, degenerate rectangles, feature and
  valuation independent uniform on [0, 1]; the canonical overfitting case.
* ``circle`` -- centers uniform on the circle of radius 1/4 around
  (1/2, 1/2), scalar radius, valuation 1/3 or 1/2 with equal probability;
  the singular-support case where consistency fails.

Randomness is counter-based (Philox) with keys derived by SHA-256 from
``(master seed, stream label, ...)``, so replications can run concurrently
and any stream can be regenerated independently of the others.  Identical
(spec, seed) pairs reproduce samples bit for bit.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .core import Buyer, GridPolicy, PriceGrid, Sample, SampleMeta, revenues

__all__ = [
    "DistributionSpec",
    "EvalResult",
    "checkerboard_policy",
    "derive_key",
    "estimate_true_objective",
    "make_sampler",
    "philox_generator",
    "sample_circle",
    "sample_example1",
    "sample_rect_experiment",
]

_DISTRIBUTION_IDS = ("rect_uniform", "example1", "circle")


def derive_key(master_seed: int, *parts) -> int:
    """128-bit stream key: low 16 bytes of SHA-256 over the decimal text
    'master|part|part|...' (little-endian, floored to 1).

    Stable across platforms and Python versions; documented so external
    tooling can reproduce any stream.
    """
    text = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    key = int.from_bytes(hashlib.sha256(text.encode("ascii")).digest()[:16], "little")
    return max(key, 1)


def philox_generator(master_seed: int, *parts) -> np.random.Generator:
    """Counter-based generator on the stream keyed by (seed, parts)."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *parts)))


@dataclass(frozen=True)
class DistributionSpec:
    """Which buyer distribution to draw from, and with what parameters."""

    id: str
    epsilon: tuple[float, ...] = ()
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.id not in _DISTRIBUTION_IDS:
            raise ValueError(f"unknown distribution {self.id!r}; use one of {_DISTRIBUTION_IDS}")
        object.__setattr__(self, "epsilon", tuple(float(e) for e in self.epsilon))


def _rect_arrays(n: int, epsilon: tuple[float, float], seed: int):
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.shape != (2,) or (eps < 0).any() or (eps > 0.1).any():
        raise ValueError(f"epsilon {epsilon} must be two radii in [0, 0.1]")
    gen = philox_generator(seed, "rect_uniform", n)
    x = gen.uniform(0.1, 0.9, size=(n, 2))
    lo, hi = x - eps, x + eps
    v = (lo * (1.0 - lo)).sum(axis=1) + (hi * (1.0 - hi)).sum(axis=1)
    return lo, hi, v


def _example1_arrays(n: int, seed: int):
    gen = philox_generator(seed, "example1", n)
    x = gen.uniform(0.0, 1.0, size=n)
    v = gen.uniform(0.0, 1.0, size=n)
    return x[:, None], x[:, None].copy(), v


def _circle_arrays(n: int, epsilon: float, seed: int, center=(0.5, 0.5), radius=0.25):
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 0.25:
        raise ValueError(f"epsilon {epsilon} must lie in [0, 0.25]")
    gen = philox_generator(seed, "circle", n)
    theta = gen.uniform(0.0, 2.0 * np.pi, size=n)
    x = np.stack(
        [center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)], axis=1
    )
    v = np.where(gen.random(n) < 0.5, 1.0 / 3.0, 0.5)
    lo = np.clip(x - epsilon, 0.0, 1.0)
    hi = np.clip(x + epsilon, 0.0, 1.0)
    return lo, hi, v


def _to_sample(lo, hi, v, meta: SampleMeta) -> Sample:
    buyers = tuple(
        Buyer(tuple(l), tuple(u), float(val)) for l, u, val in zip(lo, hi, v)
    )
    return Sample(buyers, meta)


def sample_rect_experiment(n: int, epsilon, seed: int) -> Sample:
    """Strategic-pricing experiment distribution on [0.1, 0.9]^2.

    Valuations peak when the rectangle sits at the center of the square and
    fall toward the boundary; radii up to 0.1 keep rectangles in [0, 1]^2.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    epsilon = tuple(float(e) for e in np.broadcast_to(epsilon, (2,)))
    lo, hi, v = _rect_arrays(n, epsilon, seed)
    return _to_sample(lo, hi, v, SampleMeta("rect_uniform", epsilon, seed, n))


def sample_example1(n: int, seed: int) -> Sample:
    """One-dimensional non-strategic baseline: X, V independent uniform."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi, v = _example1_arrays(n, seed)
    return _to_sample(lo, hi, v, SampleMeta("example1", (0.0,), seed, n))


def sample_circle(
    n: int, epsilon: float, seed: int, center=(0.5, 0.5), radius: float = 0.25
) -> Sample:
    """Centers uniform on a circle: a singular support where the empirical
    optimum stays bounded away from the true optimum.

    The angle parameterization is used directly, so the support is exactly
    the circle up to floating rounding.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi, v = _circle_arrays(n, epsilon, seed, center=center, radius=radius)
    return _to_sample(lo, hi, v, SampleMeta("circle", (float(epsilon),) * 2, seed, n))


def _circle_params(spec: DistributionSpec) -> tuple[tuple[float, float], float]:
    center = tuple(spec.params.get("center", (0.5, 0.5)))
    radius = float(spec.params.get("radius", 0.25))
    return center, radius


def make_sampler(spec: DistributionSpec) -> Callable[[int, int], Sample]:
    """A ``sampler(n, seed) -> Sample`` closure for the given distribution."""

    def sampler(n: int, seed: int) -> Sample:
        if spec.id == "rect_uniform":
            eps = spec.epsilon if spec.epsilon else (0.0, 0.0)
            return sample_rect_experiment(n, eps, seed)
        if spec.id == "example1":
            return sample_example1(n, seed)
        eps = spec.epsilon[0] if spec.epsilon else 0.0
        center, radius = _circle_params(spec)
        return sample_circle(n, eps, seed, center=center, radius=radius)

    return sampler


def draw_arrays(spec: DistributionSpec, n: int, seed: int):
    """(lowers, uppers, valuations) without Buyer object overhead."""
    if spec.id == "rect_uniform":
        eps = spec.epsilon if spec.epsilon else (0.0, 0.0)
        return _rect_arrays(n, tuple(np.broadcast_to(eps, (2,))), seed)
    if spec.id == "example1":
        return _example1_arrays(n, seed)
    eps = spec.epsilon[0] if spec.epsilon else 0.0
    center, radius = _circle_params(spec)
    return _circle_arrays(n, eps, seed, center=center, radius=radius)


@dataclass(frozen=True)
class EvalResult:
    """Monte Carlo estimate of a policy's expected revenue."""

    mean: float
    ci_half_width: float  # 95% normal approximation
    draws: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci_half_width": self.ci_half_width, "draws": self.draws}


def estimate_true_objective(
    policy, spec: DistributionSpec, draws: int, seed: int
) -> EvalResult:
    """Out-of-sample expected revenue of the policy under the distribution.

    The evaluation stream is keyed separately from every training stream;
    passing the training seed here still yields independent draws.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    lo, hi, v = draw_arrays(spec, draws, derive_key(seed, "eval", spec.id) % (1 << 63))
    r = revenues(policy, lo, hi, v)
    mean = math.fsum(r.tolist()) / draws
    sd = float(np.std(r, ddof=1)) if draws > 1 else 0.0
    return EvalResult(mean=mean, ci_half_width=1.96 * sd / math.sqrt(draws), draws=draws)


def checkerboard_policy(
    square_count: int,
    corner_fraction: float,
    grid: PriceGrid,
    low_index: int,
    high_index: int,
    phase: int = 0,
) -> GridPolicy:
    """Low prices in the outermost corners of alternating squares of [0,1]^2.

    The unit square splits into ``square_count x square_count`` squares; in
    squares with even ``i + j + phase`` the four corner sub-squares of side
    ``corner_fraction / square_count`` take ``low_index``, everything else
    ``high_index``.  ``corner_fraction`` snaps to a rational with
    denominator <= 64 so corner boundaries land exactly on grid lines.
    """
    if square_count < 2:
        raise ValueError("square_count must be >= 2")
    if not 0.0 < corner_fraction <= 0.5:
        raise ValueError("corner_fraction must lie in (0, 1/2]")
    if phase not in (0, 1):
        raise ValueError("phase must be 0 or 1")
    frac = Fraction(corner_fraction).limit_denominator(64)
    if frac <= 0:
        raise ValueError("corner_fraction too small to realize on the grid")
    q, c = frac.denominator, frac.numerator
    s = square_count * q
    table = np.full((s, s), high_index, dtype=np.int64)
    for i in range(square_count):
        for j in range(square_count):
            if (i + j + phase) % 2 != 0:
                continue
            r0, c0 = i * q, j * q
            for rr in (slice(r0, r0 + c), slice(r0 + q - c, r0 + q)):
                for cc in (slice(c0, c0 + c), slice(c0 + q - c, c0 + q)):
                    table[rr, cc] = low_index
    return GridPolicy.from_table(table, grid)
