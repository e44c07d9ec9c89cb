import numpy as np
import pytest

from hawkes_pot.errors import ParameterError
from hawkes_pot.evt_core import GpdParams, gpd_logpdf
from hawkes_pot.hawkes_core import BranchingStructure, clusters_from_branching
from hawkes_pot.study_harness import (
    SCENARIOS,
    ScenarioSpec,
    StudyResult,
    TRUE_MIXTURE,
    default_scenarios,
    generate_scenario,
)

SMALL = dict(mu=0.4, window_end=200.0, train_end=150.0)


class TestScenarioSpec:
    def test_named(self):
        spec = ScenarioSpec.named("mix-hier")
        assert spec.kernel_truth == "mixture"
        assert spec.marks_truth == "hier"
        assert spec.name == "Mixture kernel, hier. marks"
        assert spec.short_name == "mix-hier"
        assert spec.kernel() is TRUE_MIXTURE

    def test_default_settings(self):
        spec = ScenarioSpec()
        assert (spec.mu, spec.kappa, spec.beta) == (0.10, 0.55, 1.0)
        assert (spec.window_end, spec.train_end) == (1000.0, 800.0)
        assert (spec.sigma0, spec.xi, spec.tau_sigma) == (1.0, 0.15, 1.0)

    def test_unknown_name(self):
        with pytest.raises(ParameterError):
            ScenarioSpec.named("exp-weird")

    def test_train_end_inside_window(self):
        with pytest.raises(ParameterError):
            ScenarioSpec(window_end=100.0, train_end=100.0)

    def test_default_scenarios(self):
        specs = default_scenarios(replicates=2, window_end=300.0, train_end=200.0)
        assert [s.short_name for s in specs] == list(SCENARIOS)
        assert all(s.replicates == 2 for s in specs)


class TestGenerateScenario:
    def test_split_at_train_end(self, rng):
        train, test, truth = generate_scenario(ScenarioSpec(**SMALL), rng)
        assert train.threshold == test.threshold == 0.0
        assert train.window_end == test.window_start == 150.0
        assert test.window_end == 200.0
        assert test.n_events > 0
        assert np.all(train.times <= 150.0) and np.all(test.times > 150.0)
        np.testing.assert_array_equal(np.concatenate([train.times, test.times]), truth.times)
        np.testing.assert_array_equal(np.concatenate([train.excesses, test.excesses]), truth.marks)

    def test_iid_truth_has_common_scale(self, rng):
        _, _, truth = generate_scenario(ScenarioSpec(**SMALL), rng)
        assert truth.tau_sigma == 0.0
        np.testing.assert_allclose(truth.event_sigmas, 1.0)
        assert np.isfinite(truth.mark_loglik())

    def test_hierarchical_truth_varies_by_cluster(self, rng):
        _, _, truth = generate_scenario(ScenarioSpec(marks_truth="hier", **SMALL), rng)
        assert truth.cluster.max() + 1 == truth.z.size
        if truth.z.size > 1:
            assert np.unique(truth.event_sigmas).size > 1

    def test_truth_mark_loglik_recomputes(self, rng):
        train, test, truth = generate_scenario(ScenarioSpec(marks_truth="hier", **SMALL), rng)
        part = clusters_from_branching(BranchingStructure(truth.parents), truth.times, SMALL["window_end"])
        sigmas = truth.sigma0 * np.exp(truth.tau_sigma * truth.z[part.assignment])
        marks = np.concatenate([train.excesses, test.excesses])
        recomputed = sum(gpd_logpdf(y, GpdParams(s, truth.xi)) for y, s in zip(marks, sigmas))
        assert truth.mark_loglik() == pytest.approx(recomputed, rel=0, abs=1e-10)

    def test_reproducible(self):
        spec = ScenarioSpec(kernel_truth="mixture", **SMALL)
        a = generate_scenario(spec, np.random.default_rng(9))
        b = generate_scenario(spec, np.random.default_rng(9))
        np.testing.assert_array_equal(a[2].times, b[2].times)
        np.testing.assert_array_equal(a[2].marks, b[2].marks)

    @pytest.mark.slow
    def test_iid_mark_mean(self):
        spec = ScenarioSpec(window_end=20000.0, train_end=19000.0)
        _, _, truth = generate_scenario(spec, np.random.default_rng(77))
        se = truth.marks.std(ddof=1) / np.sqrt(truth.marks.size)
        # GPD(1, 0.15) mean is 1 / (1 - 0.15)
        assert abs(truth.marks.mean() - 1.0 / 0.85) < 3 * se


class TestStudyResult:
    def _rows(self):
        rows = []
        for r, deltas in enumerate([(0.0, 1.0), (0.0, 3.0)]):
            for model, d in zip(["Exp+iid", "DP+hier"], deltas):
                rows.append({"scenario": "Mixture kernel, hier. marks", "replicate": r, "model": model, "delta": d})
        return rows

    def test_cell_statistics(self):
        stats = StudyResult(rows=self._rows()).cell_statistics()
        cell = stats.set_index("model").loc["DP+hier"]
        assert cell["mean_delta"] == pytest.approx(2.0)
        assert cell["se_delta"] == pytest.approx(1.0)
        assert cell["n"] == 2

    def test_summary_table_orders_models(self):
        table = StudyResult(rows=self._rows()).summary_table()
        assert list(table.columns) == ["Exp+iid", "DP+hier"]
        assert table.loc["Mixture kernel, hier. marks", "DP+hier"] == "2.000 (1.000)"

    def test_empty(self):
        result = StudyResult()
        assert result.cell_statistics().empty
        assert result.summary_table().empty
