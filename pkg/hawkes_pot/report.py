"""
Plot-ready exports of a fitted model: posterior kernel density with
pointwise bands, representative cluster partitions, parameter intervals
and the posterior mean conditional intensity.
"""

from typing import List

import numpy as np
import pandas as pd

from .evt_core import MarkedEventSeries
from .hawkes_core import intensity_on_grid
from .mcmc_engine import representative_indices, summarize_chains
from .predict_score import ModelFit


def kernel_density_bands(fit: ModelFit, grid: np.ndarray, max_draws: int = 200) -> pd.DataFrame:
    """Posterior mean of h(x) on a lag grid with pointwise 95% bands."""
    draws = fit.draws
    picks = representative_indices(len(draws), max_draws)
    dens = np.stack([draws[i].hawkes.kernel.density(grid) for i in picks])
    lo, hi = np.percentile(dens, [2.5, 97.5], axis=0)
    return pd.DataFrame({
        "model": fit.model.name,
        "lag": grid,
        "mean": dens.mean(axis=0),
        "q025": lo,
        "q975": hi,
    })


def cluster_partitions(fit: ModelFit, train: MarkedEventSeries) -> pd.DataFrame:
    """One row per (representative branching, training event) with its interval cluster."""
    frames: List[pd.DataFrame] = []
    for rep in fit.mark_fit.fits:
        draw = fit.draws[rep.draw_index]
        frames.append(pd.DataFrame({
            "model": fit.model.name,
            "draw_index": rep.draw_index,
            "time": train.times,
            "excess": train.excesses,
            "parent": draw.branching.parents,
            "background": draw.branching.background_mask,
            "cluster": rep.partition.assignment,
        }))
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def parameter_intervals(fit: ModelFit) -> pd.DataFrame:
    """Posterior medians, 95% intervals and split-R-hat for Hawkes and mark parameters."""
    rows = []
    summaries = {**summarize_chains(fit.chains), **fit.mark_fit.summary()}
    for name, s in summaries.items():
        if name == "loglik":
            continue
        rows.append({"model": fit.model.name, "parameter": name, **s})
    return pd.DataFrame(rows)


def intensity_profile(fit: ModelFit, train: MarkedEventSeries, n_grid: int = 500, max_draws: int = 50) -> pd.DataFrame:
    """Posterior mean conditional intensity over the training window."""
    grid = np.linspace(train.window_start, train.window_end, n_grid)
    draws = fit.draws
    picks = representative_indices(len(draws), max_draws)
    lam = np.stack([intensity_on_grid(grid, train.times, draws[i].hawkes) for i in picks])
    return pd.DataFrame({"model": fit.model.name, "time": grid, "intensity": lam.mean(axis=0)})
