import numpy as np
import pytest

from streamcp.simulate import simulate_piecewise_poisson, simulate_sncp


class TestPiecewisePoisson:
    def test_counts_match_rates(self):
        rng = np.random.default_rng(0)
        events, truth = simulate_piecewise_poisson([100.0], [1.0, 5.0], 200.0, rng)
        n1 = np.sum(events <= 100.0)
        n2 = np.sum(events > 100.0)
        assert n1 == pytest.approx(100.0, abs=4 * 10.0)
        assert n2 == pytest.approx(500.0, abs=4 * 23.0)
        assert truth["rates"] == [1.0, 5.0]

    def test_methods_distributionally_equivalent(self):
        from scipy import stats

        rng = np.random.default_rng(1)
        a = np.concatenate(
            [
                simulate_piecewise_poisson([5.0], [2.0, 6.0], 10.0, rng, "inversion")[0]
                for _ in range(40)
            ]
        )
        b = np.concatenate(
            [
                simulate_piecewise_poisson([5.0], [2.0, 6.0], 10.0, rng, "thinning")[0]
                for _ in range(40)
            ]
        )
        assert stats.ks_2samp(a, b).pvalue > 0.01
        assert len(a) == pytest.approx(len(b), rel=0.1)

    def test_sorted_within_horizon(self):
        rng = np.random.default_rng(2)
        events, _ = simulate_piecewise_poisson([3.0, 6.0], [1.0, 2.0, 1.0], 9.0, rng)
        assert np.all(np.diff(events) >= 0)
        assert np.all((events > 0) & (events <= 9.0))

    def test_zero_rate_segment_empty(self):
        rng = np.random.default_rng(3)
        events, _ = simulate_piecewise_poisson([5.0], [0.0, 2.0], 10.0, rng)
        assert np.all(events > 5.0)

    def test_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            simulate_piecewise_poisson([5.0], [1.0], 10.0, rng)
        with pytest.raises(ValueError):
            simulate_piecewise_poisson([5.0], [1.0, -1.0], 10.0, rng)
        with pytest.raises(ValueError):
            simulate_piecewise_poisson([5.0, 2.0], [1.0, 1.0, 1.0], 10.0, rng)
        with pytest.raises(ValueError):
            simulate_piecewise_poisson([], [1.0], 10.0, rng, method="bogus")


class TestSncpSimulation:
    def test_truth_is_consistent(self):
        rng = np.random.default_rng(4)
        events, truth = simulate_sncp(nu=0.05, kappa=0.02, alpha=0.5, horizon=200.0, rng=rng)
        assert len(truth["levels"]) == len(truth["shot_times"]) + 1
        assert truth["levels"][0] == truth["lam0"]
        assert np.all(np.diff(events) >= 0)
        assert np.all((events > 0) & (events <= 200.0))

    def test_shot_constraint_holds_in_truth(self):
        rng = np.random.default_rng(5)
        _, truth = simulate_sncp(nu=0.1, kappa=0.05, alpha=0.5, horizon=300.0, rng=rng)
        kappa = 0.05
        refs = [0.0, *truth["shot_times"]]
        for i, t in enumerate(truth["shot_times"]):
            pre = truth["levels"][i] * np.exp(-kappa * (t - refs[i]))
            assert truth["levels"][i + 1] > pre

    def test_event_count_near_expected_compensator(self):
        rng = np.random.default_rng(6)
        n_events = []
        for seed in range(8):
            events, truth = simulate_sncp(
                nu=0.05, kappa=0.02, alpha=0.5, horizon=400.0, rng=np.random.default_rng(seed)
            )
            kappa = 0.02
            bounds = [0.0, *truth["shot_times"], 400.0]
            refs = [0.0, *truth["shot_times"]]
            comp = sum(
                lam * (np.exp(-kappa * (lo - ref)) - np.exp(-kappa * (hi - ref))) / kappa
                for lam, ref, lo, hi in zip(truth["levels"], refs, bounds, bounds[1:])
            )
            n_events.append(len(events) / comp)
        assert np.mean(n_events) == pytest.approx(1.0, abs=0.15)
