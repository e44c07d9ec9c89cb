"""
Hierarchical cluster-scale GPD model for the excesses.

Conditional on one branching draw, events are grouped into interval
clusters and cluster k has scale sigma_k = exp(log sigma0 + tau_sigma z_k)
with a shared shape xi. The sampler is an adaptive random-walk
Metropolis-within-Gibbs over (log sigma0, log tau_sigma, z_1..z_K, xi).
The iid GPD model is the special case tau_sigma = 0.
"""

from dataclasses import dataclass, field
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from .errors import NumericalError, ParameterError
from .evt_core import MarkedEventSeries, gpd_loglik
from .hawkes_core import ClusterPartition, clusters_from_branching
from .mcmc_engine import AdaptiveScale, ChainConfig, PosteriorDraw, PriorConfig, metropolis_accept, summarize_samples
from .metrics import ChainMetrics

# exp() argument bound for cluster scales
_LOG_SCALE_BOUND = 700.0


@dataclass(frozen=True, eq=False)
class GpdHierState:
    """One state of the mark model on a fixed cluster partition."""
    log_sigma0: float
    tau_sigma: float
    xi: float
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if not (np.isfinite(self.tau_sigma) and self.tau_sigma >= 0):
            raise ParameterError(f"Between-cluster scale must be nonnegative, got tau_sigma={self.tau_sigma}")
        if not (np.isfinite(self.log_sigma0) and np.isfinite(self.xi)):
            raise ParameterError("log sigma0 and xi must be finite")

    @property
    def sigma0(self) -> float:
        return float(np.exp(self.log_sigma0))

    @property
    def n_clusters(self) -> int:
        return int(self.z.size)

    def cluster_sigmas(self) -> np.ndarray:
        return np.exp(np.clip(self.log_sigma0 + self.tau_sigma * self.z, -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND))


@dataclass(frozen=True, eq=False)
class BranchingMarkFit:
    """Retained mark-model draws conditional on one representative branching."""
    draw_index: int
    partition: ClusterPartition
    log_sigma0: np.ndarray
    tau_sigma: np.ndarray
    xi: np.ndarray
    z: np.ndarray
    chain: np.ndarray
    acceptance: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.z.ndim != 2 or self.z.shape != (self.log_sigma0.size, self.partition.n_clusters):
            raise ParameterError("Mark draws must have one z per cluster of the conditioning partition")

    @property
    def n_draws(self) -> int:
        return int(self.log_sigma0.size)

    def state(self, s: int) -> GpdHierState:
        return GpdHierState(float(self.log_sigma0[s]), float(self.tau_sigma[s]), float(self.xi[s]), self.z[s])

    def cluster_sigmas(self) -> np.ndarray:
        """(n_draws, K) array of per-cluster scales."""
        return np.exp(np.clip(self.log_sigma0[:, None] + self.tau_sigma[:, None] * self.z, -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "draw_index": int(self.draw_index),
            "boundaries": self.partition.boundaries.tolist(),
            "assignment": self.partition.assignment.tolist(),
            "boundary_times": self.partition.boundary_times.tolist(),
            "window_end": float(self.partition.window_end),
            "log_sigma0": self.log_sigma0.tolist(),
            "tau_sigma": self.tau_sigma.tolist(),
            "xi": self.xi.tolist(),
            "z": self.z.tolist(),
            "chain": self.chain.tolist(),
            "acceptance": dict(self.acceptance),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BranchingMarkFit":
        partition = ClusterPartition(
            boundaries=np.asarray(data["boundaries"], dtype=np.int64),
            assignment=np.asarray(data["assignment"], dtype=np.int64),
            boundary_times=np.asarray(data["boundary_times"], dtype=float),
            window_end=float(data["window_end"]),
        )
        n_clusters = partition.n_clusters
        z = np.asarray(data["z"], dtype=float).reshape(-1, n_clusters)
        return cls(
            draw_index=int(data["draw_index"]),
            partition=partition,
            log_sigma0=np.asarray(data["log_sigma0"], dtype=float),
            tau_sigma=np.asarray(data["tau_sigma"], dtype=float),
            xi=np.asarray(data["xi"], dtype=float),
            z=z,
            chain=np.asarray(data["chain"], dtype=np.int64),
            acceptance=dict(data.get("acceptance", {})),
        )


@dataclass(frozen=True, eq=False)
class MarkFit:
    """Mark-model fits, one per representative branching."""
    hierarchical: bool
    fits: List[BranchingMarkFit]

    @property
    def n_draws(self) -> int:
        return sum(f.n_draws for f in self.fits)

    def pooled(self, name: str) -> np.ndarray:
        """Concatenate a scalar parameter (log_sigma0, tau_sigma, xi, sigma0) over all fits."""
        if name == "sigma0":
            return np.exp(self.pooled("log_sigma0"))
        return np.concatenate([getattr(f, name) for f in self.fits]) if self.fits else np.empty(0)

    def summary(self) -> Dict[str, Dict[str, float]]:
        """Posterior summaries of sigma0, xi and tau_sigma with split-R-hat across mark chains."""
        out = {}
        names = ("sigma0", "xi", "tau_sigma") if self.hierarchical else ("sigma0", "xi")
        chains = np.concatenate([f.chain for f in self.fits]) if self.fits else np.empty(0, dtype=int)
        for name in names:
            values = self.pooled(name)
            if values.size == 0:
                continue
            groups = [values[chains == c] for c in np.unique(chains)]
            out[name] = summarize_samples(groups)
        return out


class GpdMarkSampler:
    """Metropolis-within-Gibbs sampler for the mark model on a fixed partition."""

    def __init__(
        self,
        excesses: np.ndarray,
        assignment: np.ndarray,
        n_clusters: int,
        priors: PriorConfig,
        rng: np.random.Generator,
        hierarchical: bool = True,
        target_accept: float = 0.44,
    ):
        """
        Args:
            excesses: Scaled excesses, all positive
            assignment: Cluster index of each excess
            n_clusters: Number of clusters K
            priors: Prior configuration (GPD block)
            rng: Owned random generator
            hierarchical: False fixes tau_sigma at 0 (iid GPD)
            target_accept: Target acceptance rate for every block
        """
        self.y = np.asarray(excesses, dtype=float)
        if np.any(self.y <= 0):
            raise ParameterError("Mark model needs positive (scaled) excesses")
        self.assignment = np.asarray(assignment, dtype=np.int64)
        self.K = int(n_clusters)
        self.priors = priors
        self.rng = rng
        self.hierarchical = hierarchical
        self.scales = {
            "log_sigma0": AdaptiveScale(np.log(0.1), target_accept),
            "xi": AdaptiveScale(np.log(0.05), target_accept),
        }
        if hierarchical:
            self.scales["log_tau"] = AdaptiveScale(np.log(0.3), target_accept)
            self.scales["z"] = AdaptiveScale(np.log(0.8), target_accept)
        self.reset()

    def reset(self):
        """Starting point: xi = 0.1, log sigma0 = log mean excess, tau = 0.25, z = 0."""
        self.log_sigma0 = float(np.log(self.y.mean())) if self.y.size else 0.0
        self.log_tau = float(np.log(0.25)) if self.hierarchical else -np.inf
        self.xi = 0.1
        self.z = np.zeros(self.K)
        self._ll = self._event_loglik(self.log_sigma0, self.tau, self.z, self.xi)

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau)) if self.hierarchical else 0.0

    def _event_loglik(self, log_sigma0: float, tau: float, z: np.ndarray, xi: float) -> np.ndarray:
        log_sigma = np.clip(log_sigma0 + tau * z[self.assignment], -_LOG_SCALE_BOUND, _LOG_SCALE_BOUND)
        return gpd_loglik(self.y, np.exp(log_sigma), xi)

    def _log_prior_sigma0(self, v: float) -> float:
        return -0.5 * ((v - self.priors.log_sigma0_mean) / self.priors.log_sigma0_sd) ** 2

    def _log_prior_log_tau(self, v: float) -> float:
        # half-normal on tau, plus the log-scale Jacobian
        return -0.5 * (np.exp(v) / self.priors.tau_sd) ** 2 + v

    def _log_prior_xi(self, v: float) -> float:
        if v <= self.priors.xi_lower:
            return -np.inf
        return -0.5 * ((v - self.priors.xi_mean) / self.priors.xi_sd) ** 2

    def log_posterior(self) -> float:
        """Unnormalised log posterior of the current state (on the sampled scale)."""
        lp = self._ll.sum() + self._log_prior_sigma0(self.log_sigma0) + self._log_prior_xi(self.xi)
        if self.hierarchical:
            lp += self._log_prior_log_tau(self.log_tau) - 0.5 * (self.z**2).sum()
        return float(lp)

    def _scalar_step(self, name: str, current: float, log_prior, make_ll, iteration: int, adapt: bool) -> float:
        scale = self.scales[name]
        prop = current + scale.scale * self.rng.standard_normal()
        prior_prop = log_prior(prop)
        if np.isfinite(prior_prop):
            ll_prop = make_ll(prop)
            log_ratio = ll_prop.sum() - self._ll.sum() + prior_prop - log_prior(current)
        else:
            log_ratio = -np.inf
        accepted = metropolis_accept(log_ratio, self.rng)
        scale.record(accepted, iteration, adapt)
        if accepted:
            self._ll = ll_prop
            return prop
        return current

    def _z_step(self, iteration: int, adapt: bool):
        scale = self.scales["z"]
        prop = self.z + scale.scale * self.rng.standard_normal(self.K)
        ll_prop = self._event_loglik(self.log_sigma0, self.tau, prop, self.xi)
        cluster_prop = np.bincount(self.assignment, weights=ll_prop, minlength=self.K)
        cluster_cur = np.bincount(self.assignment, weights=self._ll, minlength=self.K)
        with np.errstate(invalid="ignore"):
            log_ratio = cluster_prop - cluster_cur - 0.5 * (prop**2 - self.z**2)
        log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
        accept = np.log(self.rng.random(self.K)) < log_ratio
        self.z = np.where(accept, prop, self.z)
        self._ll = np.where(accept[self.assignment], ll_prop, self._ll)
        scale.record(accept.mean() if self.K else 0.0, iteration, adapt)

    def step(self, iteration: int = 0, adapt: bool = False):
        """One scan: log sigma0, log tau, z block, xi."""
        self.log_sigma0 = self._scalar_step(
            "log_sigma0", self.log_sigma0, self._log_prior_sigma0,
            lambda v: self._event_loglik(v, self.tau, self.z, self.xi), iteration, adapt,
        )
        if self.hierarchical:
            self.log_tau = self._scalar_step(
                "log_tau", self.log_tau, self._log_prior_log_tau,
                lambda v: self._event_loglik(self.log_sigma0, np.exp(v), self.z, self.xi), iteration, adapt,
            )
            self._z_step(iteration, adapt)
        self.xi = self._scalar_step(
            "xi", self.xi, self._log_prior_xi,
            lambda v: self._event_loglik(self.log_sigma0, self.tau, self.z, v), iteration, adapt,
        )

    def run(self, iterations: int, warmup: int):
        """Returns retained (log_sigma0, tau, xi, z) arrays after warm-up."""
        kept = iterations - warmup
        out_s0 = np.empty(kept)
        out_tau = np.empty(kept)
        out_xi = np.empty(kept)
        out_z = np.empty((kept, self.K))
        for it in range(iterations):
            if it == warmup:
                for scale in self.scales.values():
                    scale.reset_counts()
            self.step(it, adapt=it < warmup)
            if it >= warmup:
                j = it - warmup
                out_s0[j] = self.log_sigma0
                out_tau[j] = self.tau
                out_xi[j] = self.xi
                out_z[j] = self.z
        if not np.isfinite(self._ll.sum()):
            raise NumericalError("Mark sampler ended outside the GPD support")
        return out_s0, out_tau, out_xi, out_z

    def acceptance(self) -> Dict[str, float]:
        return {name: s.acceptance_rate for name, s in self.scales.items()}


def fit_marks_for_branching(
    series: MarkedEventSeries,
    draw: PosteriorDraw,
    draw_index: int,
    priors: PriorConfig,
    cfg: ChainConfig,
    rng: np.random.Generator,
    hierarchical: bool = True,
) -> BranchingMarkFit:
    """Run cfg.mark_chains mark chains conditional on the clusters of one branching draw."""
    partition = clusters_from_branching(draw.branching, series.times - series.window_start, series.duration)
    y = series.scaled_excesses
    pieces = []
    acceptance: Dict[str, List[float]] = {}
    for c in range(cfg.mark_chains):
        sampler = GpdMarkSampler(
            y, partition.assignment, partition.n_clusters, priors, rng,
            hierarchical=hierarchical, target_accept=cfg.target_accept,
        )
        try:
            s0, tau, xi, z = sampler.run(cfg.mark_iterations, cfg.mark_warmup)
        except (ParameterError, FloatingPointError) as e:
            raise NumericalError(f"Mark fit on draw {draw_index} failed: {e}", model="hier" if hierarchical else "iid") from e
        pieces.append((s0, tau, xi, z, np.full(s0.size, c, dtype=np.int64)))
        for name, rate in sampler.acceptance().items():
            acceptance.setdefault(name, []).append(rate)

    return BranchingMarkFit(
        draw_index=int(draw_index),
        partition=partition,
        log_sigma0=np.concatenate([p[0] for p in pieces]),
        tau_sigma=np.concatenate([p[1] for p in pieces]),
        xi=np.concatenate([p[2] for p in pieces]),
        z=np.concatenate([p[3] for p in pieces], axis=0),
        chain=np.concatenate([p[4] for p in pieces]),
        acceptance={k: float(np.mean(v)) for k, v in acceptance.items()},
    )


def fit_marks_hierarchical(
    series: MarkedEventSeries,
    representative_draws: Sequence[PosteriorDraw],
    priors: PriorConfig,
    cfg: ChainConfig,
    rng: np.random.Generator,
    hierarchical: bool = True,
    draw_indices: Optional[Sequence[int]] = None,
    metrics=None,
) -> MarkFit:
    """
    Fit the mark model once per representative branching.

    Args:
        series: Training exceedances (excesses are scaled by series.scale_factor)
        representative_draws: Evenly spaced retained Hawkes draws
        priors: Prior configuration
        cfg: Chain configuration (mark_chains, mark_iterations, mark_warmup)
        rng: Root generator; one child stream is spawned per branching
        hierarchical: False gives the iid GPD variant
        draw_indices: Positions of the draws in the pooled retained list
        metrics: Optional MetricsCollector

    Returns:
        MarkFit with one BranchingMarkFit per representative branching
    """
    if draw_indices is None:
        draw_indices = range(len(representative_draws))
    children = rng.spawn(len(representative_draws))
    tag = "hier" if hierarchical else "iid"
    fits = []
    for draw, index, child in zip(representative_draws, draw_indices, children):
        start = time.perf_counter()
        fit = fit_marks_for_branching(series, draw, index, priors, cfg, child, hierarchical)
        if metrics is not None:
            metrics.record_chain(
                ChainMetrics(
                    model=f"marks-{tag}",
                    chain=int(index),
                    iterations=cfg.mark_iterations * cfg.mark_chains,
                    wall_time=time.perf_counter() - start,
                    acceptance=fit.acceptance,
                )
            )
        fits.append(fit)
    logger.debug(f"{tag} mark model fitted on {len(fits)} representative branchings")
    return MarkFit(hierarchical=hierarchical, fits=fits)
