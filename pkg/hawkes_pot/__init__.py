"""
Hawkes POT package - Bayesian marked Hawkes peaks-over-threshold modelling
"""

from .config import RunConfig, load_config
from .dp_kernel import DpConfig, LognormalMixture
from .draw_store import DrawStore, load_model_fit, write_model_fit
from .errors import ConfigError, DataError, HawkesPotError, NumericalError, ParameterError, StructuralError
from .evt_core import GpdParams, MarkedEventSeries, RawSeries, ThresholdSpec, extract_exceedances
from .fit_orchestrator import FitOrchestrator, fit_models, score_models
from .hawkes_core import BranchingStructure, ExponentialKernel, HawkesParams, simulate
from .mark_model import MarkFit, fit_marks_hierarchical
from .mcmc_engine import MODEL_GRID, ChainConfig, ModelSpec, PosteriorDraw, PriorConfig, run_hawkes_chain
from .metrics import MetricsCollector
from .predict_score import ModelFit, ScoreReport, predictive_summaries, simulate_predictive
from .study_harness import ScenarioSpec, StudyResult, generate_scenario, run_study

__all__ = [
    "BranchingStructure",
    "ChainConfig",
    "ConfigError",
    "DataError",
    "DpConfig",
    "DrawStore",
    "ExponentialKernel",
    "FitOrchestrator",
    "GpdParams",
    "HawkesParams",
    "HawkesPotError",
    "LognormalMixture",
    "MODEL_GRID",
    "MarkFit",
    "MarkedEventSeries",
    "MetricsCollector",
    "ModelFit",
    "ModelSpec",
    "NumericalError",
    "ParameterError",
    "PosteriorDraw",
    "PriorConfig",
    "RawSeries",
    "RunConfig",
    "ScenarioSpec",
    "ScoreReport",
    "StructuralError",
    "StudyResult",
    "ThresholdSpec",
    "extract_exceedances",
    "fit_marks_hierarchical",
    "fit_models",
    "generate_scenario",
    "load_config",
    "load_model_fit",
    "predictive_summaries",
    "run_hawkes_chain",
    "run_study",
    "score_models",
    "simulate",
    "simulate_predictive",
    "write_model_fit",
]
