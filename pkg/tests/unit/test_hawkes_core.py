import itertools

import numpy as np
import pytest
from scipy.integrate import quad

from hawkes_pot.dp_kernel import LognormalMixture
from hawkes_pot.errors import ParameterError, StructuralError
from hawkes_pot.hawkes_core import (
    BranchingStructure,
    ExponentialKernel,
    HawkesParams,
    clusters_from_branching,
    compensator,
    intensity,
    intensity_at_events,
    kernel_from_dict,
    loglik,
    loglik_conditional,
    simulate,
    window_loglik,
)

TOY_TIMES = np.array([0.5, 0.9, 1.6, 5.0, 5.4, 6.1])
TOY_PARENTS = np.array([0, 1, 1, 0, 4, 5])


class TestIntensity:
    def test_empty_history(self, exp_params):
        assert intensity(3.0, [], exp_params) == 1.0

    def test_single_parent(self, exp_params):
        assert intensity(1.0, [0.0], exp_params) == pytest.approx(1.18394, abs=1e-5)

    def test_pure_poisson(self):
        p = HawkesParams(0.7, 0.0, ExponentialKernel(2.0))
        assert intensity(5.0, [1.0, 2.0, 4.9], p) == 0.7

    def test_only_strict_past_counts(self, exp_params):
        assert intensity(1.0, [0.0, 1.0, 2.0], exp_params) == pytest.approx(1 + 0.5 * np.exp(-1.0))

    def test_event_vector_matches_pointwise(self, exp_params):
        got = intensity_at_events(TOY_TIMES, exp_params)
        want = [intensity(t, TOY_TIMES, exp_params) for t in TOY_TIMES]
        np.testing.assert_allclose(got, want)


class TestCompensator:
    def test_poisson(self):
        assert compensator(10.0, [1.0, 2.0], HawkesParams(1.0, 0.0, ExponentialKernel(1.0))) == pytest.approx(10.0)

    def test_offspring_mass_limit(self):
        p = HawkesParams(0.0, 0.5, ExponentialKernel(1.0))
        assert compensator(1e6, [0.0], p) == pytest.approx(0.5)

    def test_closed_form(self):
        p = HawkesParams(1.0, 0.5, ExponentialKernel(2.0))
        assert compensator(3.0, [1.0], p) == pytest.approx(3.49084, abs=1e-5)

    def test_matches_numerical_integral(self):
        p = HawkesParams(0.4, 0.6, ExponentialKernel(1.5))
        events = np.array([0.3, 1.1, 1.2])
        pieces = np.concatenate(([0.0], events, [4.0]))
        total = sum(quad(lambda t: intensity(t, events, p), a, b)[0] for a, b in zip(pieces[:-1], pieces[1:]))
        assert compensator(4.0, events, p) == pytest.approx(total, rel=1e-6)


class TestBranching:
    def test_offspring_sets(self):
        b = BranchingStructure(TOY_PARENTS)
        counts = b.offspring_counts()
        assert counts[0] == 2
        assert counts[1] == 2
        assert counts[4] == 1 and counts[5] == 1
        np.testing.assert_allclose(
            b.lags(TOY_TIMES),
            [TOY_TIMES[1] - TOY_TIMES[0], TOY_TIMES[2] - TOY_TIMES[0], TOY_TIMES[4] - TOY_TIMES[3], TOY_TIMES[5] - TOY_TIMES[4]],
        )

    @pytest.mark.parametrize("parents", [[1, 0], [0, 2], [0, -1], [0, 1, 3]])
    def test_invalid_vectors(self, parents):
        with pytest.raises(StructuralError):
            BranchingStructure(np.array(parents))

    def test_poisson_limit_of_conditional_loglik(self):
        p = HawkesParams(0.8, 0.0, ExponentialKernel(1.0))
        b = BranchingStructure(np.zeros(4, dtype=int))
        assert loglik_conditional(b, [1.0, 2.0, 3.0, 4.0], p, 10.0) == pytest.approx(4 * np.log(0.8) - 8.0)

    def test_conditional_loglik_by_hand(self, exp_params):
        b = BranchingStructure(np.array([0, 1]))
        events = [0.0, 1.0]
        want = np.log(1.0) - 2.0 + np.log(0.5) - 0.5 * (-np.expm1(-2.0) - np.expm1(-1.0)) + (0.0 - 1.0)
        assert loglik_conditional(b, events, exp_params, 2.0) == pytest.approx(want)

    def test_zero_lag_is_structural(self, exp_params):
        b = BranchingStructure(np.array([0, 1]))
        with pytest.raises(StructuralError):
            loglik_conditional(b, [1.0, 1.0], exp_params, 2.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_marginalising_branching_gives_loglik(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        events = np.sort(rng.uniform(0.0, 5.0, size=n))
        T = events[-1] + rng.uniform(0.1, 2.0)
        if seed % 2:
            kernel = LognormalMixture.from_components(rng.dirichlet([1.0, 1.0]), rng.normal(0.0, 1.0, 2), rng.uniform(0.3, 1.0, 2))
        else:
            kernel = ExponentialKernel(rng.uniform(0.3, 3.0))
        p = HawkesParams(rng.uniform(0.1, 2.0), rng.uniform(0.05, 0.95), kernel)
        total = [
            loglik_conditional(BranchingStructure(np.array((0,) + rest)), events, p, T)
            for rest in itertools.product(*[range(i + 1) for i in range(1, n)])
        ]
        assert np.logaddexp.reduce(total) == pytest.approx(loglik(events, p, T), rel=1e-8)


class TestClusters:
    def test_two_clusters(self):
        part = clusters_from_branching(BranchingStructure(TOY_PARENTS), TOY_TIMES, 10.0)
        assert part.n_clusters == 2
        np.testing.assert_array_equal(part.members(0), [0, 1, 2])
        np.testing.assert_array_equal(part.members(1), [3, 4, 5])
        np.testing.assert_allclose(part.boundary_times, [0.5, 5.0])

    def test_all_background(self):
        part = clusters_from_branching(BranchingStructure(np.zeros(5, dtype=int)), np.arange(5.0), 5.0)
        assert part.n_clusters == 5
        np.testing.assert_array_equal(part.sizes(), np.ones(5))

    def test_single_cascade(self):
        b = BranchingStructure(np.array([0, 1, 1, 1, 1]))
        part = clusters_from_branching(b, np.arange(5.0), 5.0)
        assert part.n_clusters == 1
        assert part.sizes()[0] == 5


class TestSimulation:
    def test_empty_window(self, rng, exp_params):
        path = simulate(exp_params, 0.0, rng)
        assert path.n_events == 0

    def test_reproducible(self, exp_params):
        a = simulate(exp_params, 50.0, np.random.default_rng(5))
        b = simulate(exp_params, 50.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.parents, b.parents)

    def test_parents_precede_children(self, exp_params):
        path = simulate(exp_params, 200.0, np.random.default_rng(8))
        b = path.branching
        triggered = b.triggered()
        assert np.all(path.times[triggered] > path.times[b.parents[triggered] - 1])

    def test_mixture_kernel_paths_are_valid(self, rng):
        mix = LognormalMixture.from_components([0.7, 0.3], [-0.3, 1.2], [0.35, 0.45])
        path = simulate(HawkesParams(0.1, 0.55, mix), 300.0, rng)
        assert np.all(np.diff(path.times) > 0)
        assert np.all(path.branching.lags(path.times) > 0)

    @pytest.mark.slow
    def test_expected_count(self):
        p = HawkesParams(0.10, 0.55, ExponentialKernel(1.0))
        rng = np.random.default_rng(2024)
        counts = np.array([simulate(p, 1000.0, rng).n_events for _ in range(200)])
        se = counts.std(ddof=1) / np.sqrt(counts.size)
        # edge effect at T is small for beta = 1
        assert abs(counts.mean() - 0.10 * 1000.0 / (1 - 0.55)) < 3 * se + 1.0

    def test_history_offspring_land_in_window(self):
        p = HawkesParams(0.0, 0.9, ExponentialKernel(0.5))
        path = simulate(p, 12.0, np.random.default_rng(1), history=[9.0, 9.5, 9.8], window_start=10.0)
        assert path.n_history == 3
        assert np.all((path.times >= 10.0) & (path.times < 12.0))
        assert np.all(path.parents >= 1)
        with pytest.raises(StructuralError):
            path.branching

    def test_no_background_no_history(self, rng):
        p = HawkesParams(0.0, 0.5, ExponentialKernel(1.0))
        assert simulate(p, 100.0, rng).n_events == 0


class TestWindowLoglik:
    def test_no_history_matches_full_loglik(self, exp_params):
        events = np.array([0.4, 1.0, 2.5])
        assert window_loglik([], events, exp_params, 0.0, 3.0) == pytest.approx(loglik(events, exp_params, 3.0))

    def test_chain_rule(self, exp_params):
        events = np.array([0.4, 1.0, 2.5, 3.2, 4.8])
        full = loglik(events, exp_params, 5.0)
        first = loglik(events[:3], exp_params, 3.0)
        second = window_loglik(events[:3], events[3:], exp_params, 3.0, 5.0)
        assert first + second == pytest.approx(full)

    @pytest.mark.parametrize("seed", range(5))
    def test_additive_over_adjacent_windows(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = HawkesParams(0.6, 0.5, LognormalMixture.from_components([0.6, 0.4], [-0.5, 0.8], [0.4, 0.6]))
        history = np.sort(rng.uniform(0.0, 10.0, size=8))
        events = np.sort(rng.uniform(10.0, 16.0, size=6))
        a, b, c = 10.0, 13.0, 16.0
        first, second = events[events < b], events[events >= b]
        split = window_loglik(history, first, p, a, b) + window_loglik(np.concatenate([history, first]), second, p, b, c)
        assert split == pytest.approx(window_loglik(history, events, p, a, c), rel=1e-10)

    def test_poisson_void_probability(self):
        p = HawkesParams(0.3, 0.0, ExponentialKernel(1.0))
        assert window_loglik([1.0, 2.0], [], p, 5.0, 9.0) == pytest.approx(-0.3 * 4.0)


class TestKernels:
    def test_kernel_round_trip_from_dict(self):
        k = ExponentialKernel(2.5)
        assert kernel_from_dict(k.to_dict()) == k

    def test_bad_rate(self):
        with pytest.raises(ParameterError):
            ExponentialKernel(0.0)

    def test_truncated_lags_stay_in_interval(self, rng):
        k = ExponentialKernel(0.7)
        lo = np.full(500, 1.0)
        hi = np.full(500, 2.5)
        x = k.sample_truncated(rng, lo, hi)
        assert np.all((x >= 1.0) & (x < 2.5))

    def test_params_validation(self):
        with pytest.raises(ParameterError):
            HawkesParams(1.0, 1.0, ExponentialKernel(1.0))
        with pytest.raises(ParameterError):
            HawkesParams(-0.1, 0.5, ExponentialKernel(1.0))
