"""
Fit Orchestrator - central controller for Hawkes chains, representative
branchings, mark fits and held-out scoring.

Independent units run through asyncio on a process pool when more than one
worker is configured, inline otherwise. Every unit draws from its own
SeedSequence keyed by (kernel, stage, index), so results do not depend on
scheduling order or on which other models are requested.
"""

import asyncio
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .errors import HawkesPotError
from .evt_core import MarkedEventSeries
from .mark_model import BranchingMarkFit, MarkFit, fit_marks_hierarchical
from .mcmc_engine import (
    KERNEL_KINDS,
    MARK_KINDS,
    MODEL_GRID,
    ChainConfig,
    ModelSpec,
    PosteriorDraw,
    PriorConfig,
    representative_indices,
    run_hawkes_chain_with_metrics,
)
from .metrics import ChainMetrics, MetricsCollector
from .predict_score import ModelFit, ScoreReport, score_fitted

# Stage tags used in the seed keys
STAGE_CHAIN = 0
STAGE_MARKS = 1
STAGE_SCORE = 3

KERNEL_TAGS = {"exponential": "Exp", "dp": "DP"}


def child_seed(root: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """A SeedSequence addressed by key below root, independent of spawn order."""
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + tuple(int(k) for k in key))


def as_seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))


def _chain_unit(series, kernel_kind, priors, cfg, seed, chain, tag) -> Tuple[List[PosteriorDraw], ChainMetrics]:
    return run_hawkes_chain_with_metrics(series, kernel_kind, priors, cfg, np.random.default_rng(seed), chain, tag)


def _marks_unit(series, draw, index, priors, cfg, seed, hierarchical) -> Tuple[BranchingMarkFit, List[ChainMetrics]]:
    collector = MetricsCollector()
    mark_fit = fit_marks_hierarchical(
        series, [draw], priors, cfg, np.random.default_rng(seed), hierarchical, draw_indices=[index], metrics=collector,
    )
    return mark_fit.fits[0], collector.chain_metrics


def _score_unit(fit, train, test, seed, z_draws) -> ScoreReport:
    return score_fitted(fit, train, test, np.random.default_rng(seed), z_draws)


class FitOrchestrator:
    """
    Main orchestrator that coordinates chains, mark fits and scoring
    """

    def __init__(
        self,
        priors: PriorConfig,
        chains: ChainConfig,
        metrics_collector: Optional[MetricsCollector] = None,
        executor: Optional[Executor] = None,
    ):
        """
        Initialize fit orchestrator

        Args:
            priors: Prior configuration shared by every model
            chains: Chain configuration (lengths, representative count, workers)
            metrics_collector: Optional collector for per-chain metrics
            executor: Optional executor; a process pool is created when chains.workers > 1
        """
        self.priors = priors
        self.chains = chains
        self.metrics = metrics_collector if metrics_collector is not None else MetricsCollector()
        self._owns_executor = executor is None and chains.workers > 1
        self.executor = executor if executor is not None else (
            ProcessPoolExecutor(max_workers=chains.workers) if chains.workers > 1 else None
        )

    async def _run(self, fn, *args):
        if self.executor is None:
            return fn(*args)
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self.executor, fn, *args)

    async def fit_hawkes(
        self,
        series: MarkedEventSeries,
        kernel_kind: str,
        root: np.random.SeedSequence,
    ) -> List[List[PosteriorDraw]]:
        """Run all Hawkes chains for one kernel; returns one draw list per chain."""
        k = KERNEL_KINDS.index(kernel_kind)
        tag = KERNEL_TAGS[kernel_kind]
        logger.info(f"🚀 Fitting {tag} Hawkes block: {self.chains.n_chains} chains on {series.n_events} events")
        results = await asyncio.gather(*[
            self._run(_chain_unit, series, kernel_kind, self.priors, self.chains, child_seed(root, k, STAGE_CHAIN, c), c, tag)
            for c in range(self.chains.n_chains)
        ])
        for _, metrics in results:
            self.metrics.record_chain(metrics)
        return [draws for draws, _ in results]

    async def fit_marks(
        self,
        series: MarkedEventSeries,
        chains: Sequence[Sequence[PosteriorDraw]],
        kernel_kind: str,
        hierarchical: bool,
        root: np.random.SeedSequence,
    ) -> MarkFit:
        """Mark fits on evenly spaced representative branchings of the pooled chains."""
        pooled = [d for chain in chains for d in chain]
        indices = representative_indices(len(pooled), self.chains.n_representative)
        k = KERNEL_KINDS.index(kernel_kind)
        m = MARK_KINDS.index("hier" if hierarchical else "iid")
        results = await asyncio.gather(*[
            self._run(
                _marks_unit, series, pooled[i], int(i), self.priors, self.chains,
                child_seed(root, k, STAGE_MARKS + m, r), hierarchical,
            )
            for r, i in enumerate(indices)
        ])
        for _, unit_metrics in results:
            for metrics in unit_metrics:
                self.metrics.record_chain(metrics)
        logger.info(
            f"✅ {KERNEL_TAGS[kernel_kind]}+{'hier' if hierarchical else 'iid'} marks fitted on {len(results)} representative branchings"
        )
        return MarkFit(hierarchical=hierarchical, fits=[fit for fit, _ in results])

    async def fit_models(
        self,
        series: MarkedEventSeries,
        models: Sequence[ModelSpec] = MODEL_GRID,
        seed=0,
    ) -> Dict[str, ModelFit]:
        """
        Fit every requested model. Hawkes chains are shared between the iid
        and hierarchical variants of the same kernel.
        """
        root = as_seed_sequence(seed)
        kernels = sorted({m.kernel for m in models}, key=KERNEL_KINDS.index)
        chain_sets = await asyncio.gather(*[self.fit_hawkes(series, k, root) for k in kernels])
        by_kernel = dict(zip(kernels, chain_sets))

        mark_fits = await asyncio.gather(*[
            self.fit_marks(series, by_kernel[m.kernel], m.kernel, m.hierarchical, root) for m in models
        ])
        fits = {}
        for m, mark_fit in zip(models, mark_fits):
            fits[m.name] = ModelFit(
                model=m,
                chains=by_kernel[m.kernel],
                mark_fit=mark_fit,
                scale_factor=series.scale_factor,
                metadata={"threshold": series.threshold, "window_end": series.window_end},
            )
        logger.info(f"✅ Fitted {len(fits)} models: {', '.join(fits)}")
        return fits

    async def score_models(
        self,
        train: MarkedEventSeries,
        test: MarkedEventSeries,
        models: Sequence[ModelSpec] = MODEL_GRID,
        seed=0,
        fits: Optional[Dict[str, ModelFit]] = None,
    ) -> Dict[str, ScoreReport]:
        """Fit (unless fits are given) and score every model on the test window."""
        root = as_seed_sequence(seed)
        if fits is None:
            fits = await self.fit_models(train, models, root)
        names = [m.name for m in models]
        reports = await asyncio.gather(*[
            self._run(
                _score_unit, fits[name], train, test,
                child_seed(root, KERNEL_KINDS.index(m.kernel), STAGE_SCORE + MARK_KINDS.index(m.marks)),
                self.chains.z_draws,
            )
            for name, m in zip(names, models)
        ])
        return dict(zip(names, reports))

    def shutdown(self):
        """Release the process pool if this orchestrator created it."""
        if self._owns_executor and self.executor is not None:
            self.executor.shutdown(wait=True)
            self.executor = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.shutdown()


def fit_models(
    series: MarkedEventSeries,
    priors: PriorConfig,
    chains: ChainConfig,
    models: Sequence[ModelSpec] = MODEL_GRID,
    seed=0,
    metrics_collector: Optional[MetricsCollector] = None,
) -> Dict[str, ModelFit]:
    """Synchronous wrapper around FitOrchestrator.fit_models."""
    with FitOrchestrator(priors, chains, metrics_collector) as orchestrator:
        return asyncio.run(orchestrator.fit_models(series, models, seed))


def score_models(
    train: MarkedEventSeries,
    test: MarkedEventSeries,
    priors: PriorConfig,
    chains: ChainConfig,
    models: Sequence[ModelSpec] = MODEL_GRID,
    seed=0,
    fits: Optional[Dict[str, ModelFit]] = None,
    metrics_collector: Optional[MetricsCollector] = None,
) -> Dict[str, ScoreReport]:
    """
    Fit each model on train and score it on test.

    Errors are re-raised with the model grid in the message.
    """
    with FitOrchestrator(priors, chains, metrics_collector) as orchestrator:
        try:
            return asyncio.run(orchestrator.score_models(train, test, models, seed, fits))
        except HawkesPotError as e:
            logger.error(f"❌ Scoring failed for models {[m.name for m in models]}: {e}")
            raise
