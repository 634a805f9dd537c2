"""Market construction, validation, moments, and path sampling."""
import numpy as np
import pytest

from conemv.errors import DimensionMismatch, InvalidMarket
from conemv.market import MarketSpec, PeriodDistribution, from_annual_table
from conemv.presets import (
    THREE_INDEX_RISKLESS,
    THREE_INDEX_CORR,
    THREE_INDEX_RETURNS,
    THREE_INDEX_VOLS,
    three_index_market,
    three_index_moments,
)

# Published second-moment matrix for the three-index calibration, kept as a
# regression anchor (entries rounded to 1e-4 in the source table).
THREE_INDEX_SECOND_MOMENT = np.array([
    [0.0423, 0.0454, 0.0459],
    [0.0454, 0.1021, 0.0672],
    [0.0459, 0.0672, 0.0720],
])
THREE_INDEX_COV = np.array([
    [0.0342, 0.0355, 0.0351],
    [0.0355, 0.0900, 0.0540],
    [0.0351, 0.0540, 0.0576],
])


class TestThreeIndexCalibration:
    def test_market_validates(self):
        market = three_index_market("gaussian")
        market.validate()
        assert market.horizon == 3
        assert market.n_assets == 3
        assert market.iid

    def test_mean_excess_returns(self):
        mean, _ = three_index_moments()
        np.testing.assert_allclose(mean, [0.09, 0.11, 0.12], atol=1e-12)

    def test_covariance_matches_published_table(self):
        _, cov = three_index_moments()
        np.testing.assert_allclose(cov, THREE_INDEX_COV, atol=1e-4)

    def test_second_moment_matches_published_table(self):
        market = three_index_market("gaussian")
        second = market.periods[0].second_moment()
        np.testing.assert_allclose(second, THREE_INDEX_SECOND_MOMENT,
                                   atol=1e-4)

    def test_student_t_shares_first_two_moments(self):
        g = three_index_market("gaussian").periods[0]
        t = three_index_market("student_t", df=5.0).periods[0]
        np.testing.assert_allclose(t.mean, g.mean, atol=1e-14)
        np.testing.assert_allclose(t.cov, g.cov, atol=1e-14)
        np.testing.assert_allclose(t.second_moment(), g.second_moment(),
                                   atol=1e-14)

    def test_from_annual_table_diagonal_is_vol_squared(self):
        mean, cov = from_annual_table(THREE_INDEX_RETURNS, THREE_INDEX_VOLS,
                                      THREE_INDEX_CORR, THREE_INDEX_RISKLESS)
        np.testing.assert_allclose(np.diag(cov),
                                   np.asarray(THREE_INDEX_VOLS) ** 2,
                                   rtol=1e-14)
        np.testing.assert_allclose(
            mean, np.asarray(THREE_INDEX_RETURNS) - THREE_INDEX_RISKLESS,
            atol=1e-14)


class TestValidation:
    def test_zero_eigenvalue_covariance_rejected(self):
        cov = np.array([[0.04, 0.02], [0.02, 0.01]])  # rank one
        period = PeriodDistribution.gaussian([0.05, 0.05], cov)
        market = MarketSpec(horizon=1, riskless_rates=[1.02],
                            periods=[period])
        with pytest.raises(InvalidMarket):
            market.validate()

    def test_asymmetric_covariance_rejected(self):
        cov = np.array([[0.04, 0.02], [0.019, 0.05]])
        with pytest.raises(InvalidMarket):
            PeriodDistribution.gaussian([0.05, 0.05], cov).validate()

    def test_student_t_needs_finite_variance(self):
        with pytest.raises(InvalidMarket):
            PeriodDistribution.student_t([0.05], [[0.04]], df=2.0).validate()

    def test_discrete_probabilities_must_be_positive(self):
        with pytest.raises(InvalidMarket):
            PeriodDistribution.discrete([[-0.1], [0.2]],
                                        [1.0, 0.0]).validate()

    def test_discrete_probabilities_must_sum_to_one(self):
        with pytest.raises(InvalidMarket):
            PeriodDistribution.discrete([[-0.1], [0.2]],
                                        [0.6, 0.3]).validate()

    def test_discrete_shape_mismatch(self):
        with pytest.raises((DimensionMismatch, InvalidMarket, ValueError)):
            PeriodDistribution.discrete([[-0.1], [0.2]], [0.5, 0.3, 0.2])

    def test_replicating_discrete_market_rejected(self):
        # Two atoms, two assets: the riskless payoff is attainable and the
        # minimum of E[(1 - P'K)^2] is exactly zero, which breaks the whole
        # construction.  The validator must notice.
        atoms = [[-0.1, 0.2], [0.3, -0.4]]
        period = PeriodDistribution.discrete(atoms, [0.5, 0.5])
        market = MarketSpec(horizon=1, riskless_rates=[1.05],
                            periods=[period])
        with pytest.raises(InvalidMarket):
            market.validate()

    def test_rates_length_must_match_horizon(self):
        period = PeriodDistribution.discrete([[-0.1], [0.2]], [0.5, 0.5])
        with pytest.raises((InvalidMarket, DimensionMismatch)):
            MarketSpec(horizon=2, riskless_rates=[1.05],
                       periods=[period, period]).validate()

    def test_nonpositive_rate_rejected(self):
        period = PeriodDistribution.discrete([[-0.1], [0.2]], [0.5, 0.5])
        with pytest.raises(InvalidMarket):
            MarketSpec(horizon=1, riskless_rates=[0.0],
                       periods=[period]).validate()

    def test_mixed_asset_counts_rejected(self):
        p1 = PeriodDistribution.discrete([[-0.1], [0.2]], [0.5, 0.5])
        p2 = PeriodDistribution.gaussian([0.05, 0.05],
                                         [[0.04, 0.0], [0.0, 0.04]])
        with pytest.raises((InvalidMarket, DimensionMismatch)):
            MarketSpec(horizon=2, riskless_rates=[1.05, 1.05],
                       periods=[p1, p2]).validate()


class TestMoments:
    def test_single_asset_discrete_second_moment(self):
        period = PeriodDistribution.discrete([[-0.1], [0.2]], [0.5, 0.5])
        np.testing.assert_allclose(period.second_moment(), [[0.025]],
                                   rtol=1e-15)
        np.testing.assert_allclose(period.mean, [0.05], rtol=1e-15)

    def test_discrete_mean_and_cov_derived_from_atoms(self):
        atoms = np.array([[-0.2, 0.1], [0.0, -0.3], [0.4, 0.25]])
        probs = np.array([0.3, 0.2, 0.5])
        period = PeriodDistribution.discrete(atoms, probs)
        np.testing.assert_allclose(period.mean, probs @ atoms, rtol=1e-14)
        expected_cov = (atoms - probs @ atoms).T @ np.diag(probs) @ \
            (atoms - probs @ atoms)
        np.testing.assert_allclose(period.cov, expected_cov, atol=1e-15)

    def test_second_moment_is_cov_plus_outer(self):
        mean, cov = three_index_moments()
        period = PeriodDistribution.gaussian(mean, cov)
        np.testing.assert_allclose(period.second_moment(),
                                   cov + np.outer(mean, mean), rtol=1e-14)


class TestCompounding:
    def test_constant_rate_three_periods(self):
        market = three_index_market("gaussian")
        assert market.rho(0) == pytest.approx(1.05 ** 3, rel=1e-14)
        assert market.rho(0) == pytest.approx(1.157625, rel=1e-12)

    def test_terminal_rho_is_one(self):
        market = three_index_market("gaussian")
        assert market.rho(market.horizon) == 1.0

    def test_varying_rates(self):
        period = PeriodDistribution.discrete([[-0.1], [0.2]], [0.5, 0.5])
        market = MarketSpec(horizon=2, riskless_rates=[1.0, 2.0],
                            periods=[period, period])
        assert market.rho(0) == pytest.approx(2.0, rel=1e-15)
        assert market.rho(1) == pytest.approx(2.0, rel=1e-15)
        assert market.rho(2) == 1.0

    def test_rho_rejects_out_of_range(self):
        market = three_index_market("gaussian")
        with pytest.raises((IndexError, ValueError)):
            market.rho(market.horizon + 1)
        with pytest.raises((IndexError, ValueError)):
            market.rho(-1)


class TestSampling:
    N = 1_000_000

    def test_gaussian_sample_mean(self):
        market = three_index_market("gaussian")
        draws = market.sample_block(0, seed=123, lo=0, hi=self.N)
        se = np.sqrt(np.diag(market.periods[0].cov) / self.N)
        dev = np.abs(draws.mean(axis=0) - market.periods[0].mean)
        assert np.all(dev <= 3.0 * se)

    def test_gaussian_sample_cov(self):
        market = three_index_market("gaussian")
        draws = market.sample_block(0, seed=123, lo=0, hi=self.N)
        sample_cov = np.cov(draws, rowvar=False)
        # entrywise 4 SE using the gaussian fourth-moment formula
        cov = market.periods[0].cov
        se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2)
                     / self.N)
        assert np.all(np.abs(sample_cov - cov) <= 4.0 * se)

    def test_student_t_sample_cov_within_five_percent(self):
        market = three_index_market("student_t", df=5.0)
        draws = market.sample_block(0, seed=7, lo=0, hi=self.N)
        sample_cov = np.cov(draws, rowvar=False)
        cov = market.periods[0].cov
        assert np.all(np.abs(sample_cov - cov) <= 0.05 * np.abs(cov))

    def test_student_t_sample_mean(self):
        market = three_index_market("student_t", df=5.0)
        draws = market.sample_block(0, seed=7, lo=0, hi=self.N)
        se = np.sqrt(np.diag(market.periods[0].cov) / self.N)
        dev = np.abs(draws.mean(axis=0) - market.periods[0].mean)
        assert np.all(dev <= 4.0 * se)

    def test_discrete_sampler_frequencies(self):
        atoms = np.array([[-0.2, 0.1], [0.0, -0.3], [0.4, 0.25]])
        probs = np.array([0.3, 0.2, 0.5])
        period = PeriodDistribution.discrete(atoms, probs)
        market = MarketSpec(horizon=1, riskless_rates=[1.02],
                            periods=[period])
        n = 100_000
        draws = market.sample_block(0, seed=5, lo=0, hi=n)
        for atom, p in zip(atoms, probs):
            freq = np.mean(np.all(draws == atom, axis=1))
            se = np.sqrt(p * (1.0 - p) / n)
            assert abs(freq - p) <= 4.0 * se

    def test_discrete_sampler_emits_only_atoms(self):
        atoms = np.array([[-0.2], [0.0], [0.4]])
        period = PeriodDistribution.discrete(atoms, [0.3, 0.2, 0.5])
        market = MarketSpec(horizon=1, riskless_rates=[1.0],
                            periods=[period])
        draws = market.sample_block(0, seed=1, lo=0, hi=1000)
        assert set(np.unique(draws)) <= {-0.2, 0.0, 0.4}

    def test_block_splitting_is_bit_identical(self):
        market = three_index_market("student_t", df=5.0)
        whole = market.sample_block(1, seed=99, lo=0, hi=10_000)
        split = np.vstack([
            market.sample_block(1, seed=99, lo=0, hi=3_333),
            market.sample_block(1, seed=99, lo=3_333, hi=9_000),
            market.sample_block(1, seed=99, lo=9_000, hi=10_000),
        ])
        np.testing.assert_array_equal(whole, split)

    def test_periods_draw_independent_streams(self):
        market = three_index_market("gaussian")
        a = market.sample_block(0, seed=4, lo=0, hi=100)
        b = market.sample_block(1, seed=4, lo=0, hi=100)
        assert not np.array_equal(a, b)

    def test_seed_changes_draws(self):
        market = three_index_market("gaussian")
        a = market.sample_block(0, seed=4, lo=0, hi=100)
        b = market.sample_block(0, seed=5, lo=0, hi=100)
        assert not np.array_equal(a, b)


class TestSupportBounds:
    def test_discrete_support_max(self):
        atoms = np.array([[-0.2, 0.1], [0.0, -0.3], [0.4, 0.25]])
        period = PeriodDistribution.discrete(atoms, [0.3, 0.2, 0.5])
        k = np.array([1.0, 2.0])
        assert period.support_max_inner(k) == pytest.approx(
            np.max(atoms @ k), rel=1e-15)

    def test_gaussian_support_unbounded(self):
        mean, cov = three_index_moments()
        period = PeriodDistribution.gaussian(mean, cov)
        assert period.support_max_inner(np.array([1.0, 0.0, 0.0])) == np.inf

    def test_zero_direction_is_bounded(self):
        mean, cov = three_index_moments()
        period = PeriodDistribution.gaussian(mean, cov)
        assert period.support_max_inner(np.zeros(3)) == pytest.approx(0.0)
