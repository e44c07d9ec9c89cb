import numpy as np
import pytest

from hawkes_pot.errors import ParameterError
from hawkes_pot.evt_core import GpdParams, gpd_loglik, gpd_sample
from hawkes_pot.hawkes_core import BranchingStructure, ExponentialKernel, HawkesParams, clusters_from_branching
from hawkes_pot.mark_model import (
    BranchingMarkFit,
    GpdHierState,
    GpdMarkSampler,
    MarkFit,
    fit_marks_for_branching,
    fit_marks_hierarchical,
)
from hawkes_pot.mcmc_engine import PosteriorDraw, PriorConfig

TOY_PARENTS = np.array([0, 1, 1, 0, 4, 5])


@pytest.fixture
def toy_draw():
    return PosteriorDraw(
        hawkes=HawkesParams(0.3, 0.5, ExponentialKernel(1.0)),
        branching=BranchingStructure(TOY_PARENTS),
        iteration=0,
    )


class TestGpdHierState:
    def test_cluster_sigmas(self):
        s = GpdHierState(np.log(2.0), 0.5, 0.1, np.array([0.0, 2.0]))
        np.testing.assert_allclose(s.cluster_sigmas(), [2.0, 2.0 * np.e])
        assert s.sigma0 == pytest.approx(2.0)

    def test_negative_tau(self):
        with pytest.raises(ParameterError):
            GpdHierState(0.0, -0.1, 0.1, np.zeros(2))


class TestSampler:
    def test_iid_keeps_tau_at_zero(self, rng):
        y = gpd_sample(GpdParams(1.0, 0.1), rng, size=50)
        sampler = GpdMarkSampler(y, np.zeros(50, dtype=int), 1, PriorConfig(), rng, hierarchical=False)
        s0, tau, xi, z = sampler.run(200, 100)
        assert np.all(tau == 0.0)
        assert np.all(z == 0.0)
        assert "log_tau" not in sampler.acceptance()

    def test_xi_respects_lower_bound(self, rng):
        y = gpd_sample(GpdParams(1.0, -0.2), rng, size=100)
        sampler = GpdMarkSampler(y, np.zeros(100, dtype=int), 1, PriorConfig(), rng, hierarchical=False)
        _, _, xi, _ = sampler.run(400, 100)
        assert np.all(xi > PriorConfig().xi_lower)

    def test_states_stay_in_support(self, rng):
        y = gpd_sample(GpdParams(1.0, -0.2), rng, size=100)
        assignment = np.repeat(np.arange(10), 10)
        sampler = GpdMarkSampler(y, assignment, 10, PriorConfig(), rng)
        sampler.run(300, 100)
        assert np.isfinite(sampler.log_posterior())

    def test_rejects_nonpositive_excesses(self, rng):
        with pytest.raises(ParameterError):
            GpdMarkSampler(np.array([1.0, 0.0]), np.zeros(2, dtype=int), 1, PriorConfig(), rng)

    @pytest.mark.slow
    def test_iid_posterior_means_match_grid(self):
        rng = np.random.default_rng(31)
        y = gpd_sample(GpdParams(1.0, 0.15), rng, size=500)
        priors = PriorConfig()
        sampler = GpdMarkSampler(y, np.zeros(500, dtype=int), 1, priors, rng, hierarchical=False)
        s0, _, xi, _ = sampler.run(12000, 2000)

        log_sigma = np.linspace(-0.5, 0.5, 200)
        shape = np.linspace(-0.2, 0.6, 200)
        logpost = np.empty((200, 200))
        for j, x in enumerate(shape):
            ll = gpd_loglik(y[None, :], np.exp(log_sigma)[:, None], x).sum(axis=1)
            logpost[:, j] = ll - 0.5 * ((log_sigma - priors.log_sigma0_mean) / priors.log_sigma0_sd) ** 2
            logpost[:, j] -= 0.5 * ((x - priors.xi_mean) / priors.xi_sd) ** 2
        weights = np.exp(logpost - logpost.max())
        weights /= weights.sum()
        grid_sigma = (weights.sum(axis=1) * np.exp(log_sigma)).sum()
        grid_xi = (weights.sum(axis=0) * shape).sum()

        assert np.exp(s0).mean() == pytest.approx(grid_sigma, abs=0.02)
        assert xi.mean() == pytest.approx(grid_xi, abs=0.02)

    def test_hierarchical_separates_cluster_scales(self):
        rng = np.random.default_rng(41)
        y = np.concatenate([gpd_sample(GpdParams(0.3, 0.1), rng, size=150), gpd_sample(GpdParams(3.0, 0.1), rng, size=150)])
        assignment = np.repeat([0, 1], 150)
        sampler = GpdMarkSampler(y, assignment, 2, PriorConfig(), rng)
        s0, tau, xi, z = sampler.run(3000, 1000)
        sigmas = np.exp(s0[:, None] + tau[:, None] * z)
        assert sigmas[:, 0].mean() < sigmas[:, 1].mean()
        assert tau.mean() > 0.3

    def test_adaptation_reaches_reasonable_acceptance(self, rng):
        y = gpd_sample(GpdParams(1.0, 0.1), rng, size=200)
        sampler = GpdMarkSampler(y, np.repeat(np.arange(20), 10), 20, PriorConfig(), rng)
        sampler.run(1500, 750)
        for name, rate in sampler.acceptance().items():
            assert 0.05 < rate < 0.95, name


class TestMarkFits:
    def test_fit_on_branching_partition(self, toy_train, toy_draw, priors, tiny_chains, rng):
        fit = fit_marks_for_branching(toy_train, toy_draw, 7, priors, tiny_chains, rng)
        assert fit.draw_index == 7
        assert fit.partition.n_clusters == 2
        assert fit.z.shape == (fit.n_draws, 2)
        assert fit.n_draws == tiny_chains.mark_chains * (tiny_chains.mark_iterations - tiny_chains.mark_warmup)
        assert set(np.unique(fit.chain)) == {0, 1}

    def test_partition_matches_branching(self, toy_train, toy_draw, priors, tiny_chains, rng):
        fit = fit_marks_for_branching(toy_train, toy_draw, 0, priors, tiny_chains, rng)
        want = clusters_from_branching(toy_draw.branching, toy_train.times, toy_train.window_end)
        np.testing.assert_array_equal(fit.partition.assignment, want.assignment)

    def test_hierarchical_fit_reproducible(self, toy_train, toy_draw, priors, tiny_chains):
        a = fit_marks_hierarchical(toy_train, [toy_draw, toy_draw], priors, tiny_chains, np.random.default_rng(3))
        b = fit_marks_hierarchical(toy_train, [toy_draw, toy_draw], priors, tiny_chains, np.random.default_rng(3))
        np.testing.assert_array_equal(a.pooled("xi"), b.pooled("xi"))
        assert len(a.fits) == 2

    def test_summary_names(self, toy_train, toy_draw, priors, tiny_chains, rng):
        hier = fit_marks_hierarchical(toy_train, [toy_draw], priors, tiny_chains, rng)
        iid = fit_marks_hierarchical(toy_train, [toy_draw], priors, tiny_chains, rng, hierarchical=False)
        assert set(hier.summary()) == {"sigma0", "xi", "tau_sigma"}
        assert set(iid.summary()) == {"sigma0", "xi"}
        np.testing.assert_allclose(iid.pooled("sigma0"), np.exp(iid.pooled("log_sigma0")))

    def test_serialised_fit_rebuilds(self, toy_train, toy_draw, priors, tiny_chains, rng):
        fit = fit_marks_for_branching(toy_train, toy_draw, 0, priors, tiny_chains, rng)
        back = BranchingMarkFit.from_dict(fit.to_dict())
        np.testing.assert_array_equal(back.z, fit.z)
        np.testing.assert_array_equal(back.partition.boundaries, fit.partition.boundaries)

    def test_z_shape_validated(self, toy_train, toy_draw):
        part = clusters_from_branching(toy_draw.branching, toy_train.times, toy_train.window_end)
        with pytest.raises(ParameterError):
            BranchingMarkFit(0, part, np.zeros(3), np.zeros(3), np.zeros(3), np.zeros((3, 5)), np.zeros(3, dtype=int))

    def test_empty_mark_fit(self):
        empty = MarkFit(hierarchical=True, fits=[])
        assert empty.n_draws == 0
        assert empty.summary() == {}
