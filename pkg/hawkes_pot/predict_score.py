"""
Forward predictive simulation over (T, T + H] and held-out predictive
scoring of exceedance times and excess magnitudes.

Every Monte Carlo average of likelihoods is taken in log space with a
max shift (log-mean-exp); the reported standard errors come from the delta
method on the mean of the shifted likelihoods.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from scipy.special import logsumexp

from .errors import DataError
from .evt_core import GpdParams, MarkedEventSeries, gpd_loglik, gpd_quantile
from .hawkes_core import simulate, window_loglik
from .mark_model import GpdHierState, MarkFit
from .mcmc_engine import BASELINE_MODEL, ModelSpec, PosteriorDraw, extend_branching

_LOG_SCALE_BOUND = 700.0


class ScoreEstimate(NamedTuple):
    """A Monte Carlo log score and its standard error."""
    value: float
    se: float


def log_mean_exp_with_se(values) -> ScoreEstimate:
    """log(mean(exp(values))) computed stably, with a delta-method standard error."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("log-mean-exp of an empty collection")
    top = v.max()
    if not np.isfinite(top):
        return ScoreEstimate(float(top), float("nan"))
    w = np.exp(v - top)
    mean = w.mean()
    se = w.std(ddof=1) / np.sqrt(v.size) / mean if v.size > 1 else 0.0
    return ScoreEstimate(float(top + np.log(mean)), float(se))


@dataclass(eq=False)
class ModelFit:
    """A fitted model: pooled retained Hawkes draws plus the mark fit on representative branchings."""
    model: ModelSpec
    chains: List[List[PosteriorDraw]]
    mark_fit: MarkFit
    scale_factor: float = 1.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def draws(self) -> List[PosteriorDraw]:
        return [d for chain in self.chains for d in chain]

    def representative_draw(self, k: int) -> PosteriorDraw:
        return self.draws[self.mark_fit.fits[k].draw_index]


@dataclass(frozen=True, eq=False)
class PredictivePath:
    """
    One simulated future on (start, end].

    parents use combined (history + new) 1-based indexing. cluster is -1
    for events that continue the final historical cluster and 0, 1, ... for
    clusters started by new background events.
    """
    start: float
    end: float
    times: np.ndarray
    excesses: np.ndarray
    parents: np.ndarray
    cluster: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def continues_history(self) -> np.ndarray:
        return self.cluster < 0

    @property
    def max_excess(self) -> float:
        return float(self.excesses.max()) if self.n_events else float("nan")


def _unit_gpd_quantile(u: np.ndarray, xi: float) -> np.ndarray:
    return np.asarray(gpd_quantile(u, GpdParams(1.0, xi)), dtype=float)


def forward_simulate(
    draw: PosteriorDraw,
    mark_state: GpdHierState,
    history: MarkedEventSeries,
    horizon: float,
    rng: np.random.Generator,
) -> PredictivePath:
    """
    Simulate events and original-scale excesses on [T, T + horizon).

    The window is half-open like every simulation window in hawkes_core; an
    event exactly at T or T + horizon has probability zero, so this is the
    same law as (T, T + horizon].

    Events before the first new background event continue the last historical
    cluster and use its scale; each new background event opens a cluster with
    log sigma_new = log sigma0 + tau_sigma z_new, z_new ~ N(0, 1).
    """
    start = history.window_end
    end = start + max(float(horizon), 0.0)
    empty = PredictivePath(start, end, np.empty(0), np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    if horizon <= 0:
        return empty

    path = simulate(draw.hawkes, end, rng, history=history.times, window_start=start)
    if path.n_events == 0:
        return empty

    cluster = np.cumsum(path.background_mask) - 1
    n_new = int(cluster.max()) + 1
    z_new = rng.standard_normal(n_new)
    log_sigma = mark_state.log_sigma0 + mark_state.tau_sigma * z_new
    if mark_state.n_clusters:
        log_sigma_last = mark_state.log_sigma0 + mark_state.tau_sigma * mark_state.z[-1]
    else:
        log_sigma_last = mark_state.log_sigma0
    event_log_sigma = np.where(cluster < 0, log_sigma_last, log_sigma[np.maximum(cluster, 0)])
    sigma = np.exp(np.clip(event_log_sigma, -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND))
    marks = sigma * _unit_gpd_quantile(rng.random(path.n_events), mark_state.xi) * history.scale_factor
    return PredictivePath(start, end, path.times, marks, path.parents, cluster)


def simulate_predictive(
    fit: ModelFit,
    history: MarkedEventSeries,
    horizon: float,
    n_paths: int,
    rng: np.random.Generator,
) -> List[PredictivePath]:
    """Paths cycling over representative branchings, each with a random retained mark draw."""
    fits = fit.mark_fit.fits
    if not fits:
        raise DataError("Model fit has no representative branchings to simulate from")
    draws = fit.draws
    paths = []
    for i in range(n_paths):
        rep = fits[i % len(fits)]
        s = int(rng.integers(rep.n_draws))
        paths.append(forward_simulate(draws[rep.draw_index], rep.state(s), history, horizon, rng))
    logger.debug(f"🔮 Simulated {n_paths} predictive paths over horizon {horizon}")
    return paths


@dataclass(frozen=True)
class PredictiveSummary:
    """Predictive law of the future count N_H and the future maximum excess M_H."""
    n_paths: int
    n_empty: int
    count_mean: float
    count_pmf: List[float]
    count_interval: List[float]
    max_median: float
    max_interval: List[float]
    exceedance_prob: Dict[float, float]
    observed_max: Optional[float] = None
    convention: str = "paths without events are excluded from M_H quantiles and count as non-exceeding"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_paths": self.n_paths,
            "n_empty": self.n_empty,
            "count_mean": self.count_mean,
            "count_pmf": list(self.count_pmf),
            "count_interval": list(self.count_interval),
            "max_median": self.max_median,
            "max_interval": list(self.max_interval),
            "exceedance_prob": {str(k): v for k, v in self.exceedance_prob.items()},
            "observed_max": self.observed_max,
            "convention": self.convention,
        }

    def to_frame(self) -> pd.DataFrame:
        """Tail probabilities Pr(M_H > z) as a two-column table."""
        return pd.DataFrame(
            {"level": list(self.exceedance_prob), "prob_max_exceeds": list(self.exceedance_prob.values())}
        )


def predictive_summaries(
    paths: Sequence[PredictivePath],
    levels: Sequence[float] = (),
    observed_max: Optional[float] = None,
) -> PredictiveSummary:
    """Distribution of N_H, median and central 90% interval of M_H, and Pr(M_H > z) per level."""
    if not paths:
        raise ValueError("Predictive summaries need at least one path")
    counts = np.array([p.n_events for p in paths])
    maxima = np.array([p.max_excess for p in paths])
    nonempty = counts > 0
    if nonempty.any():
        lo, med, hi = np.percentile(maxima[nonempty], [5.0, 50.0, 95.0])
    else:
        lo = med = hi = float("nan")
    filled = np.where(nonempty, maxima, -np.inf)
    exceed = {float(z): float(np.mean(filled > z)) for z in levels}
    return PredictiveSummary(
        n_paths=len(paths),
        n_empty=int((~nonempty).sum()),
        count_mean=float(counts.mean()),
        count_pmf=(np.bincount(counts) / counts.size).tolist(),
        count_interval=np.percentile(counts, [5.0, 95.0]).tolist(),
        max_median=float(med),
        max_interval=[float(lo), float(hi)],
        exceedance_prob=exceed,
        observed_max=observed_max,
    )


def time_logscore_per_draw(
    draws: Sequence[PosteriorDraw],
    train: MarkedEventSeries,
    test: MarkedEventSeries,
) -> np.ndarray:
    """Exact log-likelihood of the test times under each draw, conditional on the training history."""
    origin = train.window_start
    history = train.times - origin
    events = test.times - origin
    start = train.window_end - origin
    end = test.window_end - origin
    if events.size and events[0] <= start:
        raise DataError("Test events must lie strictly after the training window")
    return np.array([window_loglik(history, events, d.hawkes, start, end) for d in draws])


def heldout_time_logscore(
    draws: Sequence[PosteriorDraw],
    train: MarkedEventSeries,
    test: MarkedEventSeries,
) -> ScoreEstimate:
    """log p(test times | train) by log-mean-exp over posterior draws."""
    return log_mean_exp_with_se(time_logscore_per_draw(draws, train, test))


def mark_logscore_pairs(
    draws: Sequence[PosteriorDraw],
    mark_fit: MarkFit,
    train: MarkedEventSeries,
    test: MarkedEventSeries,
    rng: np.random.Generator,
    z_draws: int = 32,
) -> np.ndarray:
    """
    Original-scale log density of the test excesses for every
    (representative branching, retained mark draw) pair.
    """
    origin = train.window_start
    train_t = train.times - origin
    combined = np.concatenate([train_t, test.times - origin])
    y = test.excesses / train.scale_factor
    jacobian = y.size * np.log(train.scale_factor)
    scores = []
    for rep in mark_fit.fits:
        draw = draws[rep.draw_index]
        b = extend_branching(draw.branching, combined, draw.hawkes, rng)
        cluster = np.cumsum(b.parents[train_t.size:] == 0) - 1
        xi = rep.xi[:, None]
        total = np.zeros(rep.n_draws)

        continued = cluster < 0
        if continued.any():
            if rep.partition.n_clusters:
                log_sigma = rep.log_sigma0 + rep.tau_sigma * rep.z[:, -1]
            else:
                log_sigma = rep.log_sigma0
            sigma = np.exp(np.clip(log_sigma, -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND))[:, None]
            total += gpd_loglik(y[continued][None, :], sigma, xi).sum(axis=1)

        n_new = int(cluster.max()) + 1 if cluster.size else 0
        n_z = z_draws if mark_fit.hierarchical else 1
        for j in range(n_new):
            members = y[cluster == j]
            z = rng.standard_normal((rep.n_draws, n_z)) if mark_fit.hierarchical else np.zeros((rep.n_draws, 1))
            log_sigma = rep.log_sigma0[:, None] + rep.tau_sigma[:, None] * z
            sigma = np.exp(np.clip(log_sigma, -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND))
            ll = gpd_loglik(members[None, None, :], sigma[:, :, None], xi[:, :, None]).sum(axis=2)
            total += logsumexp(ll, axis=1) - np.log(n_z)
        scores.append(total - jacobian)
    return np.concatenate(scores) if scores else np.empty(0)


def heldout_mark_logscore(
    draws: Sequence[PosteriorDraw],
    mark_fit: MarkFit,
    train: MarkedEventSeries,
    test: MarkedEventSeries,
    rng: np.random.Generator,
    z_draws: int = 32,
) -> ScoreEstimate:
    """log p(test excesses | train) on the original excess scale, by log-mean-exp over draw pairs."""
    return log_mean_exp_with_se(mark_logscore_pairs(draws, mark_fit, train, test, rng, z_draws))


@dataclass(frozen=True)
class ScoreReport:
    """Held-out log predictive scores for one model."""
    model: str
    time_logscore: float
    mark_logscore: float
    time_se: float = 0.0
    mark_se: float = 0.0
    n_test_events: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def combined(self) -> float:
        return self.time_logscore + self.mark_logscore

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.time_se, self.mark_se))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "time_logscore": self.time_logscore,
            "time_se": self.time_se,
            "mark_logscore": self.mark_logscore,
            "mark_se": self.mark_se,
            "combined": self.combined,
            "combined_se": self.combined_se,
            "n_test_events": self.n_test_events,
            **{f"meta_{k}": v for k, v in self.metadata.items()},
        }


def score_fitted(
    fit: ModelFit,
    train: MarkedEventSeries,
    test: MarkedEventSeries,
    rng: np.random.Generator,
    z_draws: int = 32,
) -> ScoreReport:
    """Time and mark held-out scores for one fitted model."""
    if not np.isclose(test.threshold, train.threshold) or test.scale_factor != train.scale_factor:
        raise DataError("Train and test exceedances must share the training threshold and scale factor")
    draws = fit.draws
    time_score = heldout_time_logscore(draws, train, test)
    mark_score = heldout_mark_logscore(draws, fit.mark_fit, train, test, rng, z_draws)
    report = ScoreReport(
        model=fit.model.name,
        time_logscore=time_score.value,
        mark_logscore=mark_score.value,
        time_se=time_score.se,
        mark_se=mark_score.se,
        n_test_events=test.n_events,
        metadata={"n_draws": len(draws), "n_representative": len(fit.mark_fit.fits)},
    )
    logger.info(
        f"🎯 {report.model}: time {report.time_logscore:.3f}, mark {report.mark_logscore:.3f}, "
        f"combined {report.combined:.3f} on {test.n_events} test events"
    )
    return report


def score_deltas(reports: Dict[str, ScoreReport], baseline: str = BASELINE_MODEL.name) -> Dict[str, float]:
    """Combined-score differences relative to the baseline model (positive = better)."""
    if baseline not in reports:
        raise KeyError(f"Baseline model {baseline} was not scored")
    ref = reports[baseline].combined
    return {name: r.combined - ref for name, r in reports.items()}


def reports_frame(reports: Dict[str, ScoreReport], baseline: str = BASELINE_MODEL.name) -> pd.DataFrame:
    """One row per model with scores and the delta to the baseline."""
    frame = pd.DataFrame([r.to_dict() for r in reports.values()])
    if baseline in reports:
        deltas = score_deltas(reports, baseline)
        frame["delta_vs_baseline"] = frame["model"].map(deltas)
    return frame
