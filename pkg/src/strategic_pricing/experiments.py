"""Convergence harness, verification-suite runner, and output plumbing.

The convergence run draws one sample per (N, replication) cell, solves the
empirical problem exactly, and evaluates the optimal policy out of sample
with fresh Monte Carlo draws.  Stream keys derive from the master seed as
SHA-256 of ``(seed, "train", N, replication)`` and ``(seed, "eval", N,
replication)``, so every cell is reproducible in isolation and training
and evaluation never share randomness.

Record rows sort by (N, replication) regardless of worker completion
order.  Data columns of the emitted CSVs are deterministic given the
configuration; wall-clock and node-count columns are diagnostics and vary
between machines.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import GridPolicy, PriceGrid
from .distributions import (
    DistributionSpec,
    derive_key,
    draw_arrays,
    estimate_true_objective,
    make_sampler,
    philox_generator,
)
from .grid import BoundReport, verify_combinatorics, violating_buckets
from .solver import SolveOptions, solve_saa

__all__ = [
    "ConvergenceRecord",
    "ExperimentConfig",
    "VerifySuiteConfig",
    "emit_plot_data",
    "optimal_only",
    "records_to_csv",
    "run_convergence",
    "run_verification_suite",
]

_RECORD_COLUMNS = (
    "N",
    "replication",
    "seed",
    "in_sample",
    "out_sample_mean",
    "out_sample_ci",
    "solver_status",
    "gap",
    "nodes",
    "wall_ms",
)


@dataclass(frozen=True)
class ExperimentConfig:
    distribution: DistributionSpec
    prices: tuple[float, ...]
    schedule: tuple[int, ...]
    replications: int
    master_seed: int = 0
    eval_draws: int = 100_000
    solver: SolveOptions = SolveOptions()
    out_dir: str | None = None
    workers: int = 1
    require_optimal: bool = False

    def __post_init__(self) -> None:
        schedule = tuple(int(n) for n in self.schedule)
        if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ValueError(f"schedule {schedule} must be strictly increasing")
        if any(n < 1 for n in schedule):
            raise ValueError("schedule entries must be positive")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.eval_draws < 1_000:
            raise ValueError("eval_draws must be >= 1000")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "schedule", schedule)
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        PriceGrid(self.prices)  # validate

    @property
    def grid(self) -> PriceGrid:
        return PriceGrid(self.prices)


@dataclass(frozen=True)
class ConvergenceRecord:
    n: int
    replication: int
    seed: int
    in_sample: float
    out_sample_mean: float
    out_sample_ci: float
    solver_status: str
    gap: float
    nodes: int
    wall_ms: float

    def row(self) -> tuple:
        return (
            self.n,
            self.replication,
            self.seed,
            self.in_sample,
            self.out_sample_mean,
            self.out_sample_ci,
            self.solver_status,
            self.gap,
            self.nodes,
            self.wall_ms,
        )


def _train_seed(master: int, n: int, replication: int) -> int:
    return derive_key(master, "train", n, replication) % (1 << 63)


def _eval_seed(master: int, n: int, replication: int) -> int:
    return derive_key(master, "eval", n, replication) % (1 << 63)


def _convergence_cell(config: ExperimentConfig, n: int, replication: int) -> ConvergenceRecord:
    seed = _train_seed(config.master_seed, n, replication)
    try:
        sample = make_sampler(config.distribution)(n, seed)
        result = solve_saa(sample, config.grid, config.solver)
        ev = estimate_true_objective(
            result.policy,
            config.distribution,
            config.eval_draws,
            _eval_seed(config.master_seed, n, replication),
        )
        return ConvergenceRecord(
            n=n,
            replication=replication,
            seed=seed,
            in_sample=result.value,
            out_sample_mean=ev.mean,
            out_sample_ci=ev.ci_half_width,
            solver_status=result.status,
            gap=result.gap,
            nodes=result.nodes,
            wall_ms=result.wall_time_ms,
        )
    except Exception as exc:  # recorded per-row, run continues
        return ConvergenceRecord(
            n=n,
            replication=replication,
            seed=seed,
            in_sample=math.nan,
            out_sample_mean=math.nan,
            out_sample_ci=math.nan,
            solver_status=f"error: {exc}",
            gap=math.nan,
            nodes=0,
            wall_ms=math.nan,
        )


def run_convergence(config: ExperimentConfig) -> list[ConvergenceRecord]:
    """One record per (N, replication), fully reproducible from the master seed."""
    cells = [(n, rep) for n in config.schedule for rep in range(config.replications)]
    if config.workers == 1:
        records = [_convergence_cell(config, n, rep) for n, rep in cells]
    else:
        with concurrent.futures.ProcessPoolExecutor(config.workers) as pool:
            records = list(
                pool.map(_convergence_cell, *zip(*[(config, n, rep) for n, rep in cells]))
            )
    return sorted(records, key=lambda r: (r.n, r.replication))


def optimal_only(records: Iterable[ConvergenceRecord]) -> list[ConvergenceRecord]:
    return [r for r in records if r.solver_status == "optimal"]


def records_to_csv(records: Sequence[ConvergenceRecord]) -> str:
    lines = [",".join(_RECORD_COLUMNS)]
    for r in records:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in r.row()))
    return "\n".join(lines) + "\n"


def emit_plot_data(records: Sequence[ConvergenceRecord]) -> str:
    """Per-N aggregation of in/out-of-sample revenue across replications.

    Standard deviations use the sample convention (ddof=1), 0 for a single
    replication.  Columns: N,in_mean,in_sd,out_mean,out_sd,reps.
    """
    if not records:
        raise ValueError("no records to aggregate")
    lines = ["N,in_mean,in_sd,out_mean,out_sd,reps"]
    for n in sorted({r.n for r in records}):
        rows = [r for r in records if r.n == n]
        ins = np.array([r.in_sample for r in rows])
        outs = np.array([r.out_sample_mean for r in rows])
        in_sd = float(np.std(ins, ddof=1)) if len(rows) > 1 else 0.0
        out_sd = float(np.std(outs, ddof=1)) if len(rows) > 1 else 0.0
        lines.append(
            f"{n},{float(np.mean(ins))!r},{in_sd!r},{float(np.mean(outs))!r},{out_sd!r},{len(rows)}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# verification suite


@dataclass(frozen=True)
class VerifySuiteConfig:
    """Caps for the combinatorial verification runs.

    Exhaustive enumeration covers one dimension; randomized policies cover
    two.  The Monte Carlo trend reports the probability mass of violating
    buckets for random policies under the experiment distribution, which
    should shrink as the grid refines (reported, not asserted).
    """

    exhaustive_s: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    exhaustive_k: int = 2
    exhaustive_cap: int = 1 << 20
    random_s: tuple[int, ...] = (2, 3, 4, 5)
    random_policies: int = 100
    random_k: int = 2
    m_values: tuple[int, ...] = (1, 2, 3)
    seed: int = 20_240_401
    trend_s: tuple[int, ...] = (2, 4, 8)
    trend_draws: int = 100_000
    trend_policies: int = 5


def _all_tables_1d(s_fine: int, k: int) -> np.ndarray:
    count = k**s_fine
    idx = np.arange(count, dtype=np.int64)
    digits = (idx[:, None] // (k ** np.arange(s_fine, dtype=np.int64))[None, :]) % k
    return digits


def run_verification_suite(
    config: VerifySuiteConfig | None = None,
) -> tuple[list[BoundReport], list[dict]]:
    """All asserted combinatorial checks plus the reported bucket-mass trend."""
    config = config or VerifySuiteConfig()
    reports: list[BoundReport] = []

    for s in config.exhaustive_s:
        k = config.exhaustive_k
        if k ** (2 * s) > config.exhaustive_cap:
            raise ValueError(
                f"exhaustive enumeration k={k}, s={s} exceeds cap {config.exhaustive_cap}"
            )
        tables = _all_tables_1d(2 * s, k)
        for m in config.m_values:
            if not 1 <= m <= s - 1:
                continue
            reports.append(verify_combinatorics(s, m, tables, k))

    grid = PriceGrid(tuple((i + 1) / config.random_k for i in range(config.random_k)))
    for s in config.random_s:
        gen = philox_generator(config.seed, "verify-random", s)
        policies = [
            GridPolicy.from_table(
                gen.integers(0, config.random_k, size=(2 * s, 2 * s)), grid
            )
            for _ in range(config.random_policies)
        ]
        for m in config.m_values:
            if not 1 <= m <= s - 1:
                continue
            reports.append(verify_combinatorics(s, m, policies, config.random_k))

    trend = _bucket_mass_trend(config, grid)
    return reports, trend


def _bucket_mass_trend(config: VerifySuiteConfig, grid: PriceGrid) -> list[dict]:
    from .core import cube_indices

    spec = DistributionSpec("rect_uniform", (0.09, 0.09))
    rows = []
    for s in config.trend_s:
        lo, hi, _ = draw_arrays(
            spec, config.trend_draws, derive_key(config.seed, "trend", s) % (1 << 63)
        )
        lam = cube_indices(lo, s)
        mu = cube_indices(hi, s)
        gen = philox_generator(config.seed, "trend-policies", s)
        masses = []
        for _ in range(config.trend_policies):
            policy = GridPolicy.from_table(
                gen.integers(0, grid.k, size=(2 * s, 2 * s)), grid
            )
            violating = set(violating_buckets(policy, s))
            if violating:
                keys = {(*la, *mu_) for la, mu_ in violating}
                drawn = np.concatenate([lam, mu], axis=1)
                hits = np.fromiter(
                    (tuple(row) in keys for row in drawn), dtype=bool, count=len(drawn)
                )
                masses.append(float(hits.mean()))
            else:
                masses.append(0.0)
        rows.append(
            {
                "s": s,
                "mean_violating_mass": float(np.mean(masses)),
                "max_violating_mass": float(np.max(masses)),
                "policies": config.trend_policies,
                "draws": config.trend_draws,
            }
        )
    return rows
