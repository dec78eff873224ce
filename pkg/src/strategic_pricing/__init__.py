"""Exact SAA personalized pricing against strategic buyers.

A buyer who can reveal any feature vector inside a rectangle always
obtains the minimum price the policy offers there.  This package computes
optimal pricing policies for sampled buyers under that semantics, verifies
the combinatorial machinery that makes the sample average approximation
consistent when rectangles are fat, and reproduces the overfitting phase
transition between degenerate and strategic buyers.
"""

from .core import (
    Buyer,
    GridPolicy,
    Interval,
    PriceGrid,
    RegionPolicy,
    Sample,
    SampleMeta,
    discretize_prices,
    empirical_objective,
    min_price_over_rect,
    revenue,
    round_prices_down,
)
from .distributions import (
    DistributionSpec,
    EvalResult,
    checkerboard_policy,
    estimate_true_objective,
    sample_circle,
    sample_example1,
    sample_rect_experiment,
)
from .experiments import (
    ConvergenceRecord,
    ExperimentConfig,
    VerifySuiteConfig,
    emit_plot_data,
    run_convergence,
    run_verification_suite,
)
from .geometry import Arrangement, Region, build_arrangement, regions_covering, representative_point
from .grid import (
    BoundReport,
    anchors,
    bucket_conditional_objective,
    bucket_of,
    bucket_probability_estimate,
    cube_index,
    face_cubes,
    is_violating_bucket,
    line_from,
    rect_cubes,
    round_policy_T,
    verify_combinatorics,
)
from .solver import (
    SolveOptions,
    SolveResult,
    brute_force_saa,
    export_milp,
    per_buyer_upper_bound,
    presolve,
    solve_grid_restricted,
    solve_saa,
)

__version__ = "0.1.0"
