"""
Command-line entry point for the Hawkes POT pipeline

Commands:
    simulate   synthetic series + truth from a study scenario
    fit        fit the configured models and write one draw store per model
    predict    predictive summaries of the future count and maximum excess
    score      held-out time/mark/combined log scores per model
    study      simulation study with the per-scenario score-delta summary
    report     plot-ready CSVs (kernel density, clusters, intervals, traces)

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from loguru import logger

from data_utils import ingest, split, transform
from hawkes_pot.config import RunConfig, load_config, parse_overrides, write_resolved_config
from hawkes_pot.draw_store import export_trace_csv, load_model_fit, write_model_fit
from hawkes_pot.errors import ConfigError, DataError, HawkesPotError, ParameterError
from hawkes_pot.evt_core import MarkedEventSeries, ThresholdSpec
from hawkes_pot.fit_orchestrator import child_seed, fit_models, score_models
from hawkes_pot.metrics import MetricsCollector
from hawkes_pot.predict_score import ModelFit, predictive_summaries, reports_frame, simulate_predictive
from hawkes_pot.report import cluster_partitions, intensity_profile, kernel_density_bands, parameter_intervals
from hawkes_pot.study_harness import ScenarioSpec, default_scenarios, generate_scenario, run_study

COMMANDS = ("simulate", "fit", "predict", "score", "study", "report")

# Seed-key stage for predictive simulation
PREDICT_STAGE = 9


def configure_logging(out_dir: Path):
    """stderr at HAWKES_POT_LOG_LEVEL (default INFO) plus a DEBUG run.log in the output directory."""
    logger.remove()
    logger.add(sys.stderr, level=os.getenv("HAWKES_POT_LOG_LEVEL", "INFO").upper())
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.add(out_dir / "run.log", level="DEBUG", enqueue=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkes-pot", description="Bayesian marked Hawkes peaks-over-threshold pipeline")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="flat KEY=value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    parser.add_argument("--output-dir", type=Path, default=None, help="shortcut for --set OUTPUT_DIR=...")
    parser.add_argument("--scenario", default=None, help="scenario for simulate (exp-iid, exp-hier, mix-iid, mix-hier)")
    return parser


def prepare_data(cfg: RunConfig) -> Tuple[MarkedEventSeries, MarkedEventSeries]:
    """ingest -> transform -> split with train-only threshold and scale factor."""
    if not cfg.data.input_path:
        raise ConfigError("DATA_INPUT is required for this command")
    try:
        threshold = ThresholdSpec.parse(cfg.data.threshold)
    except ParameterError as e:
        raise ConfigError(f"Bad DATA_THRESHOLD: {e}") from e
    raw = ingest(
        cfg.data.input_path,
        cfg.data.time_column,
        cfg.data.value_column,
        allow_duplicates=cfg.data.transform == "daily-aggregate-sum",
    )
    series = transform(raw, cfg.data.transform)
    policy = cfg.data.scale_policy
    try:
        policy = float(policy)
    except ValueError:
        pass
    return split(series, cfg.data.split, threshold, policy)


def _store_path(out_dir: Path, model_name: str) -> Path:
    return out_dir / "draws" / f"{model_name}.ndjson"


def _write_json(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _split_record(train: MarkedEventSeries, test: MarkedEventSeries) -> Dict:
    return {
        "threshold": train.threshold,
        "scale_factor": train.scale_factor,
        "train_window": [train.window_start, train.window_end],
        "test_window": [test.window_start, test.window_end],
        "n_train": train.n_events,
        "n_test": test.n_events,
        "time_unit": train.metadata.get("time_unit", "numeric"),
        "threshold_source": test.metadata.get("threshold_source"),
    }


def fit_and_store(cfg: RunConfig, out_dir: Path, digest: str, train: MarkedEventSeries) -> Dict[str, ModelFit]:
    metrics = MetricsCollector()
    fits = fit_models(train, cfg.priors, cfg.chains, cfg.model.specs(), cfg.model.seed, metrics)
    for name, fit in fits.items():
        write_model_fit(
            _store_path(out_dir, name),
            fit,
            {
                "config_hash": digest,
                "seed": cfg.model.seed,
                "threshold": train.threshold,
                "window": [train.window_start, train.window_end],
            },
        )
    logger.info("\n" + metrics.generate_report())
    return fits


def load_or_fit(cfg: RunConfig, out_dir: Path, digest: str, train: MarkedEventSeries) -> Dict[str, ModelFit]:
    """Reuse the draw stores in out_dir when all of them exist, fit and store otherwise."""
    names = [m.name for m in cfg.model.specs()]
    paths = [_store_path(out_dir, n) for n in names]
    existing = [p for p in paths if p.exists()]
    if len(existing) == len(paths):
        logger.info(f"📂 Loading {len(paths)} draw stores from {out_dir / 'draws'}")
        return {n: load_model_fit(p, expected_config_hash=digest) for n, p in zip(names, paths)}
    if existing:
        raise DataError(
            f"{out_dir / 'draws'} holds stores for only some models ({', '.join(p.stem for p in existing)}); "
            "remove them or choose a fresh --output-dir"
        )
    return fit_and_store(cfg, out_dir, digest, train)


def cmd_simulate(cfg: RunConfig, out_dir: Path, scenario: Optional[str]):
    name = scenario or cfg.study.scenarios[0]
    spec = ScenarioSpec.named(name, window_end=cfg.study.window_end, train_end=cfg.study.train_end)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.model.seed))
    train, test, truth = generate_scenario(spec, rng)
    pd.DataFrame({"time": truth.times, "value": truth.marks}).to_csv(out_dir / "simulated.csv", index=False)
    _write_json(out_dir / "truth.json", {
        "scenario": spec.short_name,
        "mu": truth.params.mu,
        "kappa": truth.params.kappa,
        "kernel": truth.params.kernel.to_dict(),
        "parents": truth.parents.tolist(),
        "cluster": truth.cluster.tolist(),
        "z": truth.z.tolist(),
        "sigma0": truth.sigma0,
        "tau_sigma": truth.tau_sigma,
        "xi": truth.xi,
        "attempts": truth.attempts,
        "train_end": spec.train_end,
        "window_end": spec.window_end,
        "mark_loglik": truth.mark_loglik(),
    })
    logger.info(f"🧪 Simulated {truth.times.size} events for {spec.name} ({train.n_events} train / {test.n_events} test)")


def cmd_fit(cfg: RunConfig, out_dir: Path, digest: str):
    train, test = prepare_data(cfg)
    _write_json(out_dir / "split.json", _split_record(train, test))
    load_or_fit(cfg, out_dir, digest, train)


def cmd_score(cfg: RunConfig, out_dir: Path, digest: str):
    train, test = prepare_data(cfg)
    _write_json(out_dir / "split.json", _split_record(train, test))
    fits = load_or_fit(cfg, out_dir, digest, train)
    reports = score_models(train, test, cfg.priors, cfg.chains, cfg.model.specs(), cfg.model.seed, fits=fits)
    frame = reports_frame(reports)
    frame.to_csv(out_dir / "scores.csv", index=False)
    _write_json(out_dir / "scores.json", {name: r.to_dict() for name, r in reports.items()})


def cmd_predict(cfg: RunConfig, out_dir: Path, digest: str):
    train, test = prepare_data(cfg)
    fits = load_or_fit(cfg, out_dir, digest, train)
    root = np.random.SeedSequence(cfg.model.seed)
    for k, (name, fit) in enumerate(fits.items()):
        rng = np.random.default_rng(child_seed(root, PREDICT_STAGE, k))
        paths = simulate_predictive(fit, train, cfg.predict.horizon, cfg.predict.n_paths, rng)
        observed = float(test.excesses.max()) if test.n_events else None
        summary = predictive_summaries(paths, cfg.predict.levels, observed_max=observed)
        _write_json(out_dir / f"predictive_{name}.json", summary.to_dict())
        summary.to_frame().to_csv(out_dir / f"predictive_{name}_tail.csv", index=False)
        logger.info(
            f"🔮 {name}: E[N_H]={summary.count_mean:.2f}, median M_H={summary.max_median:.4g}, "
            f"90% interval [{summary.max_interval[0]:.4g}, {summary.max_interval[1]:.4g}]"
        )


def cmd_report(cfg: RunConfig, out_dir: Path, digest: str):
    train, _ = prepare_data(cfg)
    fits = load_or_fit(cfg, out_dir, digest, train)
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    grid = np.linspace(cfg.predict.grid_max / cfg.predict.grid_points, cfg.predict.grid_max, cfg.predict.grid_points)
    pd.concat([kernel_density_bands(f, grid) for f in fits.values()]).to_csv(report_dir / "kernel_density.csv", index=False)
    pd.concat([cluster_partitions(f, train) for f in fits.values()]).to_csv(report_dir / "clusters.csv", index=False)
    pd.concat([parameter_intervals(f) for f in fits.values()]).to_csv(report_dir / "parameter_intervals.csv", index=False)
    pd.concat([intensity_profile(f, train) for f in fits.values()]).to_csv(report_dir / "intensity.csv", index=False)
    for name, fit in fits.items():
        export_trace_csv(fit, report_dir / f"trace_{name}.csv")
    logger.info(f"📄 Report CSVs written to {report_dir}")


def cmd_study(cfg: RunConfig, out_dir: Path):
    specs = default_scenarios(
        cfg.study.scenarios,
        replicates=cfg.study.replicates,
        window_end=cfg.study.window_end,
        train_end=cfg.study.train_end,
    )
    result = run_study(specs, cfg.priors, cfg.chains, cfg.model.seed, cfg.model.specs())
    result.to_frame().to_csv(out_dir / "study_results.csv", index=False)
    result.cell_statistics().to_csv(out_dir / "study_cells.csv", index=False)
    result.summary_table().to_csv(out_dir / "study_summary.csv")
    if result.failures:
        pd.DataFrame(result.failures).to_csv(out_dir / "study_failures.csv", index=False)
        logger.warning(f"⚠️ {len(result.failures)} replicates failed; see study_failures.csv")
    logger.info("\n" + result.summary_table().to_string())


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = parse_overrides(args.overrides)
    if args.output_dir is not None:
        overrides["OUTPUT_DIR"] = str(args.output_dir)
    cfg = load_config(args.config, overrides)
    out_dir = Path(cfg.output_dir)
    configure_logging(out_dir)
    _, digest = write_resolved_config(cfg, out_dir)
    logger.info(f"🚀 hawkes-pot {args.command} (config {digest[:12]}, seed {cfg.model.seed})")

    if args.command == "simulate":
        cmd_simulate(cfg, out_dir, args.scenario)
    elif args.command == "fit":
        cmd_fit(cfg, out_dir, digest)
    elif args.command == "score":
        cmd_score(cfg, out_dir, digest)
    elif args.command == "predict":
        cmd_predict(cfg, out_dir, digest)
    elif args.command == "report":
        cmd_report(cfg, out_dir, digest)
    else:
        cmd_study(cfg, out_dir)
    logger.info(f"✅ {args.command} finished")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        return run(argv)
    except HawkesPotError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
