import json

import pytest

from cli import main

TINY = [
    "CHAIN_COUNT=2", "CHAIN_ITERATIONS=50", "CHAIN_BURN_IN=20", "CHAIN_REPRESENTATIVE=2",
    "CHAIN_MARK_CHAINS=1", "CHAIN_MARK_ITERATIONS=40", "CHAIN_MARK_WARMUP=10", "CHAIN_Z_DRAWS=4",
    "CHAIN_LOG_EVERY=0", "MODEL_VARIANTS=Exp+iid,Exp+hier", "MODEL_SEED=99",
]


def args(command, out_dir, *overrides):
    argv = [command, "--output-dir", str(out_dir)]
    for item in (*TINY, *overrides):
        argv += ["--set", item]
    return argv


@pytest.fixture
def simulated_csv(tmp_path):
    out = tmp_path / "sim"
    argv = args("simulate", out, "STUDY_WINDOW_END=300", "STUDY_TRAIN_END=240") + ["--scenario", "exp-hier"]
    assert main(argv) == 0
    return out / "simulated.csv"


def data_keys(csv):
    return [f"DATA_INPUT={csv}", "DATA_THRESHOLD=upper:60", "DATA_SPLIT=fraction:0.8"]


class TestCommands:
    def test_simulate_writes_truth(self, simulated_csv):
        truth = json.loads((simulated_csv.parent / "truth.json").read_text())
        assert truth["scenario"] == "exp-hier"
        assert (simulated_csv.parent / "resolved_config.env").exists()
        assert (simulated_csv.parent / "run.log").exists()

    def test_score_is_reproducible_across_runs(self, tmp_path, simulated_csv):
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(args("score", first, *data_keys(simulated_csv))) == 0
        assert main(args("score", second, *data_keys(simulated_csv))) == 0
        a = json.loads((first / "scores.json").read_text())
        b = json.loads((second / "scores.json").read_text())
        assert a == b
        assert set(a) == {"Exp+iid", "Exp+hier"}
        assert (first / "draws" / "Exp+iid.ndjson").exists()
        split = json.loads((first / "split.json").read_text())
        assert split["threshold_source"] == "train"

    def test_predict_and_report_reuse_stores(self, tmp_path, simulated_csv):
        out = tmp_path / "run"
        keys = (*data_keys(simulated_csv), "PREDICT_HORIZON=30", "PREDICT_PATHS=20", "PREDICT_LEVELS=1,3")
        assert main(args("fit", out, *keys)) == 0
        before = (out / "draws" / "Exp+hier.ndjson").read_text()
        assert main(args("predict", out, *keys)) == 0
        assert main(args("report", out, *keys)) == 0
        assert (out / "draws" / "Exp+hier.ndjson").read_text() == before
        summary = json.loads((out / "predictive_Exp+hier.json").read_text())
        assert summary["n_paths"] == 20
        assert set(summary["exceedance_prob"]) == {"1.0", "3.0"}
        for name in ("kernel_density.csv", "clusters.csv", "parameter_intervals.csv", "intensity.csv", "trace_Exp+iid.csv"):
            assert (out / "report" / name).exists()


class TestExitCodes:
    def test_unknown_key_is_config_error(self, tmp_path):
        assert main(args("fit", tmp_path / "x", "CHAINS=3")) == 2

    def test_missing_input_is_config_error(self, tmp_path):
        assert main(args("fit", tmp_path / "x")) == 2

    def test_absent_file_is_data_error(self, tmp_path):
        assert main(args("fit", tmp_path / "x", f"DATA_INPUT={tmp_path / 'nope.csv'}")) == 3

    def test_changed_config_rejects_old_stores(self, tmp_path, simulated_csv):
        out = tmp_path / "run"
        assert main(args("fit", out, *data_keys(simulated_csv))) == 0
        assert main(args("score", out, *data_keys(simulated_csv), "PRIOR_TAU_SD=0.7")) == 3

    def test_partial_stores_are_data_error(self, tmp_path, simulated_csv):
        out = tmp_path / "run"
        assert main(args("fit", out, *data_keys(simulated_csv))) == 0
        (out / "draws" / "Exp+hier.ndjson").unlink()
        assert main(args("fit", out, *data_keys(simulated_csv))) == 3


class TestRerun:
    def test_fit_twice_reuses_stores(self, tmp_path, simulated_csv):
        out = tmp_path / "run"
        assert main(args("fit", out, *data_keys(simulated_csv))) == 0
        before = (out / "draws" / "Exp+iid.ndjson").read_text()
        assert main(args("fit", out, *data_keys(simulated_csv))) == 0
        assert (out / "draws" / "Exp+iid.ndjson").read_text() == before
