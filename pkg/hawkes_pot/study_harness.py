"""
Simulation study: a 2 x 2 grid of true data-generating processes
(Exponential or lognormal-mixture kernel, iid or hierarchical marks), the
four fitted model variants, and held-out score deltas against Exp+iid.
"""

import asyncio
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from .dp_kernel import LognormalMixture
from .errors import HawkesPotError, ParameterError
from .evt_core import GpdParams, MarkedEventSeries, gpd_loglik, gpd_quantile
from .fit_orchestrator import FitOrchestrator, as_seed_sequence, child_seed
from .hawkes_core import ExponentialKernel, HawkesParams, TriggeringKernel, clusters_from_branching, simulate
from .mcmc_engine import BASELINE_MODEL, MODEL_GRID, ChainConfig, ModelSpec, PriorConfig
from .predict_score import score_deltas

TRUE_MIXTURE = LognormalMixture.from_components([0.7, 0.3], [-0.3, 1.2], [0.35, 0.45])

SCENARIOS: Dict[str, Tuple[str, str]] = {
    "exp-iid": ("exponential", "iid"),
    "exp-hier": ("exponential", "hier"),
    "mix-iid": ("mixture", "iid"),
    "mix-hier": ("mixture", "hier"),
}

# Regeneration attempts before a scenario is declared degenerate
MAX_ATTEMPTS = 50


@dataclass(frozen=True)
class ScenarioSpec:
    """One true data-generating process of the study."""
    kernel_truth: str = "exponential"
    marks_truth: str = "iid"
    mu: float = 0.10
    kappa: float = 0.55
    beta: float = 1.0
    window_end: float = 1000.0
    train_end: float = 800.0
    sigma0: float = 1.0
    xi: float = 0.15
    tau_sigma: float = 1.0
    replicates: int = 5

    def __post_init__(self):
        if self.kernel_truth not in ("exponential", "mixture"):
            raise ParameterError(f"Unknown true kernel: {self.kernel_truth}")
        if self.marks_truth not in ("iid", "hier"):
            raise ParameterError(f"Unknown true mark model: {self.marks_truth}")
        if not 0 < self.train_end < self.window_end:
            raise ParameterError("Training end must lie strictly inside the simulation window")
        if self.replicates < 1:
            raise ParameterError("At least one replicate is required")

    @classmethod
    def named(cls, name: str, **overrides) -> "ScenarioSpec":
        """Scenario by short name: exp-iid, exp-hier, mix-iid or mix-hier."""
        if name not in SCENARIOS:
            raise ParameterError(f"Unknown scenario '{name}' (expected one of {', '.join(SCENARIOS)})")
        kernel, marks = SCENARIOS[name]
        return cls(kernel_truth=kernel, marks_truth=marks, **overrides)

    @property
    def name(self) -> str:
        kernel = "Exponential kernel" if self.kernel_truth == "exponential" else "Mixture kernel"
        marks = "iid marks" if self.marks_truth == "iid" else "hier. marks"
        return f"{kernel}, {marks}"

    @property
    def short_name(self) -> str:
        return f"{'exp' if self.kernel_truth == 'exponential' else 'mix'}-{self.marks_truth}"

    def kernel(self) -> TriggeringKernel:
        return ExponentialKernel(self.beta) if self.kernel_truth == "exponential" else TRUE_MIXTURE

    def params(self) -> HawkesParams:
        return HawkesParams(self.mu, self.kappa, self.kernel())


@dataclass(frozen=True, eq=False)
class TruthRecord:
    """Everything needed to recompute the simulated marks' log-likelihood under the truth."""
    params: HawkesParams
    times: np.ndarray
    parents: np.ndarray
    cluster: np.ndarray
    z: np.ndarray
    sigma0: float
    tau_sigma: float
    xi: float
    marks: np.ndarray
    attempts: int = 1

    @property
    def event_sigmas(self) -> np.ndarray:
        return self.sigma0 * np.exp(self.tau_sigma * self.z[self.cluster])

    def mark_loglik(self) -> float:
        return float(gpd_loglik(self.marks, self.event_sigmas, self.xi).sum())


def generate_scenario(spec: ScenarioSpec, rng: np.random.Generator):
    """
    Simulate one replicate on [0, window_end) and split it at train_end.

    Marks are the excesses directly (threshold 0, scale factor 1). A path with
    no test events is regenerated from the same stream and the attempt count
    is recorded in the truth record.

    Returns:
        (train, test, truth)
    """
    p = spec.params()
    tau = spec.tau_sigma if spec.marks_truth == "hier" else 0.0
    for attempt in range(1, MAX_ATTEMPTS + 1):
        path = simulate(p, spec.window_end, rng)
        if path.n_events == 0:
            continue
        partition = clusters_from_branching(path.branching, path.times, spec.window_end)
        z = rng.standard_normal(partition.n_clusters) if tau > 0 else np.zeros(partition.n_clusters)
        sigma = spec.sigma0 * np.exp(tau * z[partition.assignment])
        marks = sigma * np.asarray(gpd_quantile(rng.random(path.n_events), GpdParams(1.0, spec.xi)))
        is_test = path.times > spec.train_end
        if not is_test.any() or np.any(marks <= 0):
            logger.debug(f"♻️ Degenerate replicate for {spec.short_name} (attempt {attempt}), regenerating")
            continue

        truth = TruthRecord(
            params=p,
            times=path.times,
            parents=path.parents,
            cluster=partition.assignment,
            z=z,
            sigma0=spec.sigma0,
            tau_sigma=tau,
            xi=spec.xi,
            marks=marks,
            attempts=attempt,
        )
        meta = {"scenario": spec.short_name, "attempts": attempt}
        train = MarkedEventSeries(
            window_end=spec.train_end,
            threshold=0.0,
            times=path.times[~is_test],
            excesses=marks[~is_test],
            metadata=meta,
        )
        test = MarkedEventSeries(
            window_end=spec.window_end,
            threshold=0.0,
            times=path.times[is_test],
            excesses=marks[is_test],
            window_start=spec.train_end,
            metadata=meta,
        )
        if train.n_events == 0:
            continue
        return train, test, truth
    raise HawkesPotError(f"No usable replicate for {spec.short_name} after {MAX_ATTEMPTS} attempts")


@dataclass
class StudyResult:
    """Per-replicate, per-model scores with deltas against the baseline model."""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def cell_statistics(self) -> pd.DataFrame:
        """Mean delta and its Monte Carlo standard error per (scenario, model)."""
        frame = self.to_frame()
        if frame.empty:
            return pd.DataFrame(columns=["scenario", "model", "mean_delta", "se_delta", "n"])
        grouped = frame.groupby(["scenario", "model"], sort=False)["delta"]
        stats = grouped.agg(mean_delta="mean", sd="std", n="count").reset_index()
        stats["se_delta"] = (stats["sd"] / np.sqrt(stats["n"])).fillna(0.0)
        return stats[["scenario", "model", "mean_delta", "se_delta", "n"]]

    def summary_table(self) -> pd.DataFrame:
        """Rows = scenarios, columns = models, cells "mean (se)"."""
        stats = self.cell_statistics()
        if stats.empty:
            return pd.DataFrame()
        stats["cell"] = [f"{m:.3f} ({s:.3f})" for m, s in zip(stats["mean_delta"], stats["se_delta"])]
        table = stats.pivot(index="scenario", columns="model", values="cell")
        order = [m.name for m in MODEL_GRID if m.name in table.columns]
        return table[order]


async def _run_replicate(
    orchestrator: FitOrchestrator,
    spec: ScenarioSpec,
    scenario_index: int,
    replicate: int,
    models: Sequence[ModelSpec],
    root: np.random.SeedSequence,
):
    data_rng = np.random.default_rng(child_seed(root, scenario_index, replicate, 0))
    train, test, truth = generate_scenario(spec, data_rng)
    fit_root = child_seed(root, scenario_index, replicate, 1)
    reports = await orchestrator.score_models(train, test, models, fit_root)
    deltas = score_deltas(reports, BASELINE_MODEL.name) if BASELINE_MODEL.name in reports else {}
    rows = []
    for name, report in reports.items():
        rows.append({
            "scenario": spec.name,
            "replicate": replicate,
            "model": name,
            "time_logscore": report.time_logscore,
            "mark_logscore": report.mark_logscore,
            "combined": report.combined,
            "delta": deltas.get(name, float("nan")),
            "n_train": train.n_events,
            "n_test": test.n_events,
            "attempts": truth.attempts,
        })
    logger.info(f"📊 {spec.name} replicate {replicate}: " + ", ".join(f"{r['model']} {r['delta']:+.3f}" for r in rows))
    return rows


async def run_study_async(
    specs: Sequence[ScenarioSpec],
    priors: PriorConfig,
    chains: ChainConfig,
    seed=0,
    models: Sequence[ModelSpec] = MODEL_GRID,
    orchestrator: Optional[FitOrchestrator] = None,
) -> StudyResult:
    """Run every replicate of every scenario; per-replicate failures are recorded, not raised."""
    root = as_seed_sequence(seed)
    own = orchestrator is None
    orchestrator = orchestrator or FitOrchestrator(priors, chains)
    jobs = []
    for spec in specs:
        s = list(SCENARIOS).index(spec.short_name)
        for r in range(spec.replicates):
            jobs.append((spec, r, _run_replicate(orchestrator, spec, s, r, models, root)))
    try:
        outcomes = await asyncio.gather(*[j[2] for j in jobs], return_exceptions=True)
    finally:
        if own:
            orchestrator.shutdown()

    result = StudyResult()
    for (spec, r, _), outcome in zip(jobs, outcomes):
        if isinstance(outcome, BaseException):
            if not isinstance(outcome, (HawkesPotError, ArithmeticError, ValueError)):
                raise outcome
            logger.warning(f"⚠️ {spec.name} replicate {r} failed: {outcome}")
            result.failures.append({"scenario": spec.name, "replicate": r, "error": str(outcome)})
        else:
            result.rows.extend(outcome)
    return result


def run_study(
    specs: Sequence[ScenarioSpec],
    priors: PriorConfig,
    chains: ChainConfig,
    seed=0,
    models: Sequence[ModelSpec] = MODEL_GRID,
) -> StudyResult:
    """Synchronous wrapper around run_study_async."""
    return asyncio.run(run_study_async(specs, priors, chains, seed, models))


def default_scenarios(names: Sequence[str] = tuple(SCENARIOS), replicates: int = 5, **overrides) -> List[ScenarioSpec]:
    return [ScenarioSpec.named(n, replicates=replicates, **overrides) for n in names]
