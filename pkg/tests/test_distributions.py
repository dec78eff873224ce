import numpy as np
import pytest

from strategic_pricing.core import (
    Buyer,
    GridPolicy,
    Interval,
    PriceGrid,
    Sample,
    discretize_prices,
    empirical_objective,
)
from strategic_pricing.distributions import (
    DistributionSpec,
    checkerboard_policy,
    derive_key,
    estimate_true_objective,
    make_sampler,
    sample_circle,
    sample_example1,
    sample_rect_experiment,
)
from strategic_pricing.solver import per_buyer_upper_bound

THIRD_HALF = PriceGrid((1 / 3, 1 / 2))


def rect_valuation(lo, hi):
    lo, hi = np.asarray(lo), np.asarray(hi)
    return float((lo * (1 - lo)).sum() + (hi * (1 - hi)).sum())


class TestRectExperiment:
    def test_valuation_formula_at_center(self):
        assert rect_valuation((0.5, 0.5), (0.5, 0.5)) == pytest.approx(1.0)
        assert rect_valuation((0.41, 0.41), (0.59, 0.59)) == pytest.approx(0.9676)

    def test_sampled_valuations_match_formula(self):
        s = sample_rect_experiment(200, (0.09, 0.09), 7)
        for b in s.buyers:
            assert b.valuation == pytest.approx(rect_valuation(b.lower, b.upper), abs=1e-15)

    def test_support(self):
        for eps in ((0.0, 0.0), (0.09, 0.09), (0.1, 0.02)):
            s = sample_rect_experiment(500, eps, 3)
            assert np.all(s.lowers >= 0.0) and np.all(s.uppers <= 1.0)
            assert np.all(s.lowers <= s.uppers)
            assert np.all((0.0 <= s.valuations) & (s.valuations <= 1.0))

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            sample_rect_experiment(10, (0.2, 0.0), 1)

    def test_degenerate_regime_has_distinct_points(self):
        s = sample_rect_experiment(500, (0.0, 0.0), 11)
        assert np.all(s.lowers == s.uppers)
        assert len(np.unique(s.lowers, axis=0)) == 500

    def test_reproducible(self):
        a = sample_rect_experiment(50, (0.09, 0.09), 99)
        b = sample_rect_experiment(50, (0.09, 0.09), 99)
        assert a == b  # byte-for-byte identical dataclasses


class TestExample1:
    def test_degenerate(self):
        s = sample_example1(100, 5)
        assert all(b.is_point for b in s.buyers)
        assert s.dimension == 1

    def test_valuation_mean_near_half(self):
        s = sample_example1(100_000, 17)
        assert abs(float(s.valuations.mean()) - 0.5) < 0.01

    def test_best_constant_price_near_quarter(self):
        # max over the fine grid of p * P(V >= p) approximates 1/4 at p = 1/2
        s = sample_example1(20_000, 23)
        grid = discretize_prices(Interval(0, 1), 100)
        values = [
            p * float((s.valuations >= p).mean()) for p in grid.prices
        ]
        assert max(values) == pytest.approx(0.25, abs=0.02)
        assert grid.prices[int(np.argmax(values))] == pytest.approx(0.5, abs=0.05)


class TestCircle:
    def test_centers_exactly_on_circle(self):
        s = sample_circle(300, 0.1, 2)
        centers = (s.lowers + s.uppers) / 2.0
        radii = np.linalg.norm(centers - 0.5, axis=1)
        assert np.allclose(radii, 0.25, atol=1e-12)

    def test_support_with_radius(self):
        s = sample_circle(300, 0.1, 2)
        assert np.all(s.lowers >= 0.15 - 0.1 - 1e-12)
        assert np.all(s.uppers <= 0.85 + 0.1 + 1e-12)

    def test_valuations_two_point(self):
        s = sample_circle(2000, 0.05, 3)
        assert set(np.round(s.valuations, 12)) == {round(1 / 3, 12), 0.5}

    def test_per_buyer_bound_near_five_twelfths(self):
        s = sample_circle(20_000, 0.1, 5)
        assert per_buyer_upper_bound(s, THIRD_HALF) == pytest.approx(5 / 12, abs=0.01)

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            sample_circle(10, 0.3, 1)


class TestEstimateTrueObjective:
    def test_constant_half_under_example1(self):
        pol = GridPolicy.constant(0, 1, 1, PriceGrid((0.5,)))
        spec = DistributionSpec("example1")
        ev = estimate_true_objective(pol, spec, 100_000, 3)
        assert ev.mean == pytest.approx(0.25, abs=3 * ev.ci_half_width + 1e-3)

    def test_unaffordable_constant_under_circle(self):
        pol = GridPolicy.constant(0, 1, 2, PriceGrid((0.83,)))
        spec = DistributionSpec("circle", (0.1,))
        ev = estimate_true_objective(pol, spec, 5_000, 3)
        assert ev.mean == 0.0

    def test_constant_under_degenerate_rect_matches_independent_mc(self):
        # Independent oracle: direct tail probability of the valuation
        # formula under plain uniform draws.
        rng = np.random.default_rng(123456)
        x = rng.uniform(0.1, 0.9, size=(2_000_000, 2))
        v = 2 * (x * (1 - x)).sum(axis=1)
        want = 0.65 * float((v >= 0.65).mean())
        pol = GridPolicy.constant(0, 1, 2, PriceGrid((0.65,)))
        spec = DistributionSpec("rect_uniform", (0.0, 0.0))
        ev = estimate_true_objective(pol, spec, 200_000, 9)
        assert ev.mean == pytest.approx(want, abs=3 * ev.ci_half_width + 1e-3)

    def test_reproducible_and_independent_of_training_stream(self):
        pol = GridPolicy.constant(0, 1, 1, PriceGrid((0.5,)))
        spec = DistributionSpec("example1")
        a = estimate_true_objective(pol, spec, 2_000, 42)
        b = estimate_true_objective(pol, spec, 2_000, 42)
        assert a == b
        # evaluating under the training seed still uses a distinct stream
        assert derive_key(42, "eval", "example1") != derive_key(42, "example1", 2000)

    def test_ci_fields(self):
        pol = GridPolicy.constant(0, 1, 1, PriceGrid((0.5,)))
        ev = estimate_true_objective(pol, DistributionSpec("example1"), 1_000, 1)
        assert ev.ci_half_width >= 0.0 and 0.0 <= ev.mean <= 1.0 and ev.draws == 1_000


class TestCheckerboard:
    def test_corner_is_low_center_is_high(self):
        pol = checkerboard_policy(8, 0.25, THIRD_HALF, 0, 1, phase=0)
        # (0,0) square is shaded; its exact corner carries the low price
        assert pol.price_at((0.0, 0.0)) == 1 / 3
        w = 1 / 8
        assert pol.price_at((w / 2, w / 2)) == 1 / 2  # shaded-square center
        assert pol.price_at((1.5 * w, 0.5 * w)) == 1 / 2  # unshaded square

    def test_phase_flips_parity(self):
        pol = checkerboard_policy(8, 0.25, THIRD_HALF, 0, 1, phase=1)
        assert pol.price_at((0.0, 0.0)) == 1 / 2
        assert pol.price_at((1 / 8, 0.0)) == 1 / 3

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            checkerboard_policy(1, 0.25, THIRD_HALF, 0, 1)
        with pytest.raises(ValueError):
            checkerboard_policy(8, 0.6, THIRD_HALF, 0, 1)
        with pytest.raises(ValueError):
            checkerboard_policy(8, 0.25, THIRD_HALF, 0, 1, phase=2)

    def test_probe_reaches_bound_with_small_radii(self):
        # Mechanism check in the regime where fixed parameters suffice:
        # low-valuation buyers hugging shaded corners, high-valuation
        # buyers strictly inside unshaded squares, radii well under the
        # square width.
        sq, w = 6, 1 / 6
        buyers = []
        for i, j in ((0, 0), (2, 2), (4, 0), (0, 4)):
            x = (i * w + 0.01, j * w + 0.01)
            buyers.append(
                Buyer((x[0] - 0.005, x[1] - 0.005), (x[0] + 0.005, x[1] + 0.005), 1 / 3)
            )
        for i, j in ((1, 2), (3, 0), (5, 2), (2, 5)):
            c = (i * w + w / 2, j * w + w / 2)
            buyers.append(
                Buyer((c[0] - 0.005, c[1] - 0.005), (c[0] + 0.005, c[1] + 0.005), 1 / 2)
            )
        sample = Sample(tuple(buyers))
        pol = checkerboard_policy(sq, 0.25, THIRD_HALF, 0, 1, phase=0)
        assert empirical_objective(pol, sample) == per_buyer_upper_bound(sample, THIRD_HALF)

    def test_sweep_on_drawn_circle_sample_fixture(self):
        # Frozen sweep outcome on one drawn sample (N=30, radius 0.1).
        # With radius 0.1 every buyer rectangle (side 0.2) strictly spans a
        # grid vertex for all square counts >= 6, and every vertex touches
        # a low corner cell of an adjacent shaded square, so high-valuation
        # buyers cannot keep the high price: the probe cannot reach the
        # per-buyer bound on this sample and tops out at the all-low value.
        seed = derive_key(4219, "checkerboard") % (1 << 63)
        assert seed == 7819881901922424767
        s30 = sample_circle(30, 0.1, seed)
        bound = per_buyer_upper_bound(s30, THIRD_HALF)
        assert bound == pytest.approx(0.4166666666666667)
        best_val, witness = -1.0, None
        for squares in range(6, 17):
            for frac in (0.05, 0.10, 0.15, 0.20, 0.25):
                for phase in (0, 1):
                    pol = checkerboard_policy(squares, frac, THIRD_HALF, 0, 1, phase)
                    val = empirical_objective(pol, s30)
                    if val > best_val:
                        best_val = val
                    if val == bound and witness is None:
                        witness = (squares, frac, phase)
        assert witness is None
        assert best_val == pytest.approx(1 / 3)


class TestSamplerClosure:
    def test_make_sampler_round_trips_spec(self):
        spec = DistributionSpec("circle", (0.1,))
        s = make_sampler(spec)(25, 7)
        assert s.meta.distribution == "circle" and s.n == 25

    def test_unknown_distribution_rejected(self):
        with pytest.raises(ValueError):
            DistributionSpec("gaussian")
