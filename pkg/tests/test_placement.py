"""Tests for placement-module"""

import unittest

import numpy as np
import pytest
from scipy import stats

from wgqdpy.src.exceptions import UnreachableTargetError
from wgqdpy.src.placement import (
    NEUTRALIZED,
    ProtocolParams,
    SiteArray,
    cumulative_yield,
    estimate_lambda_from_fill,
    expected_iterations,
    fill_probability_estimates,
    markov_single_fraction,
    occupancy_stats,
    run_iteration,
    simulate_protocol,
    state_to_dict,
)


def single_fraction_by_enumeration(lam, k, neutralize_multi):
    """Site-level Markov chain over (empty, single, multi), stepped k times"""
    empty = stats.poisson.pmf(0, lam)
    single = stats.poisson.pmf(1, lam)
    multi = 1 - empty - single
    exposed = [empty, single, multi]
    transition = np.array(
        [
            exposed,
            [0.0, 1.0, 0.0],
            exposed if neutralize_multi else [0.0, 0.0, 1.0],
        ]
    )
    distribution = np.array([1.0, 0.0, 0.0])
    for _ in range(k):
        distribution = distribution @ transition
    return distribution[1]


@pytest.mark.placement
class TestAnalytic(unittest.TestCase):

    def test_lambda_from_fill(self):
        lam, single = estimate_lambda_from_fill(0.55)
        assert lam == pytest.approx(0.7985, abs=1e-4)
        assert single == pytest.approx(0.653, abs=1e-3)
        lam, single = estimate_lambda_from_fill(0.32)
        assert lam == pytest.approx(0.3857, abs=1e-4)
        assert single == pytest.approx(0.820, abs=1e-3)
        assert estimate_lambda_from_fill(0.0) == (0.0, 1.0)
        with pytest.raises(ValueError):
            estimate_lambda_from_fill(1.0)

    def test_expected_iterations(self):
        assert expected_iterations(0.55, 0.99) == 6
        assert expected_iterations(0.5, 0.5) == 1
        assert expected_iterations(0.32, 0.99) == 12
        assert expected_iterations(1.0, 0.99) == 1
        assert expected_iterations(0.3, 0.0) == 0
        with pytest.raises(UnreachableTargetError):
            expected_iterations(0.0, 0.9)
        with pytest.raises(ValueError):
            expected_iterations(0.5, 1.0)

    def test_cumulative_yield(self):
        assert cumulative_yield(0.55, 0) == 0.0
        assert cumulative_yield(0.55, 1) == pytest.approx(0.55)
        assert cumulative_yield(0.55, 6) >= 0.99 > cumulative_yield(0.55, 5)

    def test_markov_formula_matches_enumeration(self):
        for lam in (0.3, 0.7985, 1.5):
            for neutralize in (False, True):
                for k in (1, 2, 5, 10):
                    assert markov_single_fraction(lam, k, neutralize) == pytest.approx(
                        single_fraction_by_enumeration(lam, k, neutralize)
                    )

    def test_fill_estimates(self):
        estimate = fill_probability_estimates([8, 12], [25, 17])
        np.testing.assert_allclose(estimate.table["p_fill"], [0.32, 12 / 17])
        assert estimate.pooled_p == pytest.approx(20 / 42)
        assert estimate.mean_p == pytest.approx((0.32 + 12 / 17) / 2)
        with pytest.raises(ValueError):
            fill_probability_estimates([8, 20], [25, 17])


@pytest.mark.placement
class TestSiteArray(unittest.TestCase):

    def test_iteration_only_exposes_free_sites(self):
        params = ProtocolParams(**{"lambda": 0.8})
        state = run_iteration(SiteArray(), params, seed=4)
        occupied = set(np.flatnonzero(state.occupancy >= 1).tolist())
        after = run_iteration(state, params, seed=4)
        record = after.iteration_log[-1]
        assert occupied.isdisjoint(record.exposed)
        # passivated sites keep their emitters
        np.testing.assert_array_equal(
            after.occupancy[sorted(occupied)], state.occupancy[sorted(occupied)]
        )
        assert after.iterations == 2
        assert state.iterations == 1

    def test_reproducible(self):
        params = ProtocolParams(lam=0.8)
        first, second = SiteArray(), SiteArray()
        for _ in range(4):
            first = run_iteration(first, params, seed=9)
            second = run_iteration(second, params, seed=9)
        assert np.array_equal(first.occupancy, second.occupancy)

    def test_neutralize_multi(self):
        params = ProtocolParams(lam=2.0, neutralize_multi=True)
        state = run_iteration(SiteArray(rows=10, cols=10), params, seed=1)
        multi = np.flatnonzero(state.occupancy >= 2)
        assert multi.size > 0
        after = run_iteration(state, params, seed=1)
        record = after.iteration_log[-1]
        assert set(record.neutralized) == set(multi.tolist())
        assert set(multi.tolist()) <= set(record.exposed)
        unfilled = [i for i in multi if after.occupancy[i] < 1]
        assert all(after.occupancy[i] == NEUTRALIZED for i in unfilled)

    def test_destroy_existing(self):
        params = ProtocolParams(lam=1.0, destroy_existing_prob=1.0)
        state = run_iteration(SiteArray(), params, seed=2)
        occupied = np.flatnonzero(state.occupancy >= 1)
        after = run_iteration(state, params, seed=2)
        assert set(after.iteration_log[-1].destroyed) == set(occupied.tolist())
        assert np.all(after.occupancy[occupied] == 0)

    def test_lambda_schedule(self):
        params = ProtocolParams(lam=0.5, lambda_schedule=[0.0, 2.0])
        assert params.lambda_at(0) == 0.0
        assert params.lambda_at(1) == 2.0
        assert params.lambda_at(5) == 0.5
        state = run_iteration(SiteArray(), params, seed=0)
        assert np.all(state.occupancy == 0)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            ProtocolParams(lam=-0.1)
        with pytest.raises(ValueError):
            ProtocolParams(lam=0.5, destroy_existing_prob=1.5)
        with pytest.raises(ValueError):
            SiteArray(rows=2, cols=2, occupancy=np.zeros(5))

    def test_occupancy_stats(self):
        empty = occupancy_stats(SiteArray(rows=1, cols=4))
        assert empty.occupied_fraction == 0.0
        assert empty.single_of_occupied is None
        state = SiteArray(rows=1, cols=4, occupancy=np.array([0, 1, 2, 1]))
        result = occupancy_stats(state)
        assert result.occupied_fraction == 0.75
        assert result.single_of_occupied == pytest.approx(2 / 3)
        assert result.single_of_all == 0.5

    def test_state_to_dict(self):
        state = run_iteration(SiteArray(rows=2, cols=3), ProtocolParams(lam=1.0), seed=0)
        output = state_to_dict(state)
        assert len(output["occupancy"]) == 2
        assert len(output["occupancy"][0]) == 3
        assert output["iterations"][0]["iteration"] == 0


@pytest.mark.placement
class TestMonteCarlo(unittest.TestCase):

    def test_agrees_with_markov_chain(self):
        lam = 0.7985
        curve = simulate_protocol(
            ProtocolParams(lam=lam), n_sites=25, max_iterations=8, trials=2000, seed=3
        )
        assert list(curve.columns) == [
            "iteration", "occupied_mean", "occupied_ci", "single_mean", "single_ci"
        ]
        k = curve["iteration"].to_numpy()
        occupied = 1 - np.exp(-lam * k)
        single = [markov_single_fraction(lam, int(i), False) for i in k]
        assert np.all(np.abs(curve["occupied_mean"] - occupied) <= 4 * curve["occupied_ci"] + 1e-3)
        assert np.all(np.abs(curve["single_mean"] - single) <= 4 * curve["single_ci"] + 1e-3)

    def test_neutralization_raises_single_yield(self):
        plain = simulate_protocol(ProtocolParams(lam=1.5), max_iterations=6, trials=300, seed=1)
        neutralized = simulate_protocol(
            ProtocolParams(lam=1.5, neutralize_multi=True), max_iterations=6, trials=300, seed=1
        )
        assert neutralized["single_mean"].iloc[-1] > plain["single_mean"].iloc[-1]

    def test_trial_seeds_independent_of_trial_count(self):
        params = ProtocolParams(lam=0.5)
        one = simulate_protocol(params, max_iterations=3, trials=1, seed=5)
        assert np.all(one["occupied_ci"] == 0)
        again = simulate_protocol(params, max_iterations=3, trials=1, seed=5)
        assert one.equals(again)


@pytest.mark.placement
class TestProtocolAcceptance(unittest.TestCase):

    def setUp(self):
        self.z = stats.norm.ppf(0.975)

    def test_occupied_fraction_after_six_iterations(self):
        p = 0.55
        assert expected_iterations(p, 0.99) == 6
        expected = cumulative_yield(p, 6)
        assert expected == pytest.approx(0.9917, abs=1e-4)
        curve = simulate_protocol(
            ProtocolParams(lam=-np.log(1 - p)), max_iterations=6, trials=1000, seed=7
        )
        last = curve.iloc[-1]
        sigma = last["occupied_ci"] / self.z
        assert sigma > 0
        assert abs(last["occupied_mean"] - expected) <= 3 * sigma

    def test_neutralization_matches_markov_enumeration(self):
        lam = 1.5
        curve = simulate_protocol(
            ProtocolParams(lam=lam, neutralize_multi=True),
            max_iterations=5,
            trials=1000,
            seed=9,
        )
        for row in curve.itertuples():
            expected = single_fraction_by_enumeration(lam, row.iteration, True)
            sigma = row.single_ci / self.z
            assert abs(row.single_mean - expected) <= 3 * sigma + 1e-3
