"""
Posterior sampler for the Hawkes block of the marked POT model.

One systematic Gibbs scan updates, in order: the branching structure B,
the background rate mu, the branching ratio kappa, the triggering kernel
(adaptive random-walk MH on log beta, or a DP proposal with an
integrated-hazard MH correction) and, for the DP kernel, the concentration
alpha_DP. The scan never looks at excess magnitudes.
"""

from dataclasses import dataclass, field
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.special import gammainc, gammaincinv

from .dp_kernel import CrpState, DpConfig, LognormalMixture, crp_sweep, posterior_dp_draw, prior_kernel_draw, sample_concentration
from .errors import NumericalError, ParameterError
from .evt_core import MarkedEventSeries
from .hawkes_core import (
    BranchingStructure,
    ExponentialKernel,
    HawkesParams,
    PairwiseLags,
    TriggeringKernel,
    kernel_from_dict,
    loglik,
)
from .metrics import ChainMetrics

KERNEL_KINDS = ("exponential", "dp")
MARK_KINDS = ("iid", "hier")

# Log-density values below this are treated as a rejection
LOG_DENSITY_FLOOR = -1e300


@dataclass(frozen=True)
class PriorConfig:
    """
    Prior distributions and fixed hyperparameters.

    mu ~ Gamma(mu_shape, mu_rate); kappa ~ Gamma(kappa_shape, kappa_rate)
    truncated to (0, 1) (shape 1, rate 0 is Uniform(0, 1)); beta ~ Uniform(0,
    beta_upper); DP settings in `dp`; log sigma0 ~ N(mean, sd^2),
    tau_sigma ~ half-N(0, tau_sd^2), xi ~ N(xi_mean, xi_sd^2) truncated
    below at xi_lower.
    """
    mu_shape: float = 0.1
    mu_rate: float = 0.1
    kappa_shape: float = 1.0
    kappa_rate: float = 0.0
    beta_upper: float = 100.0
    dp: DpConfig = field(default_factory=DpConfig)
    log_sigma0_mean: float = 0.0
    log_sigma0_sd: float = 1.0
    tau_sd: float = 0.5
    xi_mean: float = 0.0
    xi_sd: float = 0.2
    xi_lower: float = -0.25

    def __post_init__(self):
        if not (self.mu_shape > 0 and self.mu_rate > 0):
            raise ParameterError("Background-rate prior needs positive shape and rate")
        if not (self.kappa_shape > 0 and self.kappa_rate >= 0):
            raise ParameterError("Branching-ratio prior needs positive shape and nonnegative rate")
        if not self.beta_upper > 0:
            raise ParameterError("Exponential-rate prior upper bound must be positive")
        if not (self.log_sigma0_sd > 0 and self.tau_sd > 0 and self.xi_sd > 0):
            raise ParameterError("GPD prior standard deviations must be positive")


@dataclass(frozen=True)
class ChainConfig:
    """Chain lengths and sampler tuning. `iterations` includes burn-in."""
    n_chains: int = 2
    iterations: int = 2500
    burn_in: int = 500
    thin: int = 1
    n_representative: int = 25
    mark_chains: int = 2
    mark_iterations: int = 1000
    mark_warmup: int = 500
    z_draws: int = 32
    target_accept: float = 0.44
    log_every: int = 500
    workers: int = 1

    def __post_init__(self):
        if self.n_chains < 1 or self.mark_chains < 1:
            raise ParameterError("At least one chain is required")
        if not 0 <= self.burn_in < self.iterations:
            raise ParameterError(f"Burn-in must lie in [0, iterations), got {self.burn_in}/{self.iterations}")
        if not 0 <= self.mark_warmup < self.mark_iterations:
            raise ParameterError("Mark warm-up must lie in [0, mark_iterations)")
        if self.thin < 1 or self.n_representative < 1 or self.z_draws < 1:
            raise ParameterError("thin, n_representative and z_draws must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ParameterError("Target acceptance rate must lie in (0, 1)")

    @property
    def retained_per_chain(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass(frozen=True)
class ModelSpec:
    """One cell of the model grid: triggering kernel x mark model."""
    kernel: str
    marks: str

    def __post_init__(self):
        if self.kernel not in KERNEL_KINDS:
            raise ParameterError(f"Unknown kernel kind: {self.kernel}")
        if self.marks not in MARK_KINDS:
            raise ParameterError(f"Unknown mark model: {self.marks}")

    @property
    def name(self) -> str:
        return f"{'Exp' if self.kernel == 'exponential' else 'DP'}+{self.marks}"

    @property
    def hierarchical(self) -> bool:
        return self.marks == "hier"

    @classmethod
    def parse(cls, name: str) -> "ModelSpec":
        """Parse "Exp+iid", "DP+hier" and friends (case-insensitive)."""
        try:
            kernel, marks = name.strip().split("+")
        except ValueError as e:
            raise ParameterError(f"Malformed model name '{name}'") from e
        kernel = {"exp": "exponential", "exponential": "exponential", "dp": "dp"}.get(kernel.lower())
        if kernel is None:
            raise ParameterError(f"Malformed model name '{name}'")
        return cls(kernel, marks.lower())

    def __str__(self) -> str:
        return self.name


MODEL_GRID = (
    ModelSpec("exponential", "iid"),
    ModelSpec("dp", "iid"),
    ModelSpec("exponential", "hier"),
    ModelSpec("dp", "hier"),
)
BASELINE_MODEL = MODEL_GRID[0]


@dataclass(frozen=True, eq=False)
class PosteriorDraw:
    """One retained state of a Hawkes chain."""
    hawkes: HawkesParams
    branching: BranchingStructure
    iteration: int
    chain: int = 0
    alpha_dp: Optional[float] = None
    loglik: float = float("nan")

    @property
    def kernel_kind(self) -> str:
        return self.hawkes.kernel.kind

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": int(self.iteration),
            "chain": int(self.chain),
            "mu": float(self.hawkes.mu),
            "kappa": float(self.hawkes.kappa),
            "kernel": self.hawkes.kernel.to_dict(),
            "alpha_dp": None if self.alpha_dp is None else float(self.alpha_dp),
            "parents": self.branching.parents.tolist(),
            "loglik": float(self.loglik),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PosteriorDraw":
        return cls(
            hawkes=HawkesParams(float(data["mu"]), float(data["kappa"]), kernel_from_dict(data["kernel"])),
            branching=BranchingStructure(np.asarray(data["parents"], dtype=np.int64)),
            iteration=int(data["iteration"]),
            chain=int(data.get("chain", 0)),
            alpha_dp=data.get("alpha_dp"),
            loglik=float(data.get("loglik", float("nan"))),
        )


@dataclass
class AdaptiveScale:
    """
    Random-walk proposal scale with Robbins-Monro adaptation toward a target
    acceptance rate. Adaptation only happens while `adapt=True` is passed.
    """
    log_scale: float = 0.0
    target: float = 0.44
    accepted: float = 0.0
    proposed: int = 0

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def record(self, accepted, iteration: int, adapt: bool):
        """accepted may be a bool or a fraction for block updates."""
        self.accepted += float(accepted)
        self.proposed += 1
        if adapt:
            gain = min(1.0, (iteration + 1) ** -0.6)
            self.log_scale = float(np.clip(self.log_scale + gain * (float(accepted) - self.target), -10.0, 5.0))

    def reset_counts(self):
        self.accepted = 0.0
        self.proposed = 0


def metropolis_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(log_ratio)); non-finite or floored ratios reject."""
    if np.isnan(log_ratio) or log_ratio < LOG_DENSITY_FLOOR:
        return False
    if log_ratio >= 0:
        return True
    return bool(np.log(rng.random()) < log_ratio)


# ---------------------------------------------------------------------------
# Branching
# ---------------------------------------------------------------------------

def allocation_probabilities(events, i: int, p: HawkesParams) -> np.ndarray:
    """
    Posterior allocation probabilities of event i (0-based): entry 0 is the
    background, entry j is the j-th event (1-based) for j <= i.
    """
    events = np.asarray(events, dtype=float)
    weights = np.empty(i + 1)
    weights[0] = p.mu
    if i:
        weights[1:] = p.kappa * p.kernel.density(events[i] - events[:i])
    total = weights.sum()
    if not total > 0:
        raise NumericalError(f"Zero conditional intensity at event {i + 1}")
    return weights / total


def _allocate(times: np.ndarray, p: HawkesParams, rng: np.random.Generator, pairs: PairwiseLags, start: int) -> np.ndarray:
    n = times.size
    target = np.arange(start, n)
    parents = np.zeros(target.size, dtype=np.int64)
    if target.size == 0:
        return parents

    rows, cols, lags = pairs.rows, pairs.cols, pairs.lags
    if start > 0:
        keep = rows >= start
        rows, cols, lags = rows[keep], cols[keep], lags[keep]
    dens = p.kappa * p.kernel.density(lags) if p.kappa > 0 else np.zeros(lags.size)

    first = np.searchsorted(rows, target, side="left")
    last = np.searchsorted(rows, target, side="right")
    excitation = np.bincount(rows, weights=dens, minlength=n)[target]
    total = p.mu + excitation
    has_parent = last > first
    if np.any(has_parent & ~(total > 0)):
        bad = int(target[np.argmax(has_parent & ~(total > 0))]) + 1
        raise NumericalError(f"Zero conditional intensity at event {bad}")

    u = rng.random(target.size) * total
    triggered = has_parent & (u >= p.mu) & (excitation > 0)
    if np.any(triggered):
        cum = np.concatenate(([0.0], np.cumsum(dens)))
        k = np.searchsorted(cum[1:], cum[first] + (u - p.mu), side="right")
        k = np.clip(k, first, np.maximum(last - 1, first))
        parents[triggered] = cols[k[triggered]] + 1
    return parents


def sample_branching(
    events,
    p: HawkesParams,
    rng: np.random.Generator,
    pairs: Optional[PairwiseLags] = None,
) -> BranchingStructure:
    """
    Draw every B_i from its categorical conditional:
    Pr(B_i = 0) = mu / lambda(t_i), Pr(B_i = j) = kappa h(t_i - t_j) / lambda(t_i).
    """
    events = np.asarray(events, dtype=float)
    if pairs is None:
        pairs = PairwiseLags.from_times(events)
    return BranchingStructure(_allocate(events, p, rng, pairs, start=0))


def extend_branching(
    b: BranchingStructure,
    events,
    p: HawkesParams,
    rng: np.random.Generator,
) -> BranchingStructure:
    """
    Keep the parents of the first b.n_events events and allocate the rest
    (which may point at any earlier event) by one posterior-allocation pass.
    """
    events = np.asarray(events, dtype=float)
    start = b.n_events
    if start > events.size:
        raise ParameterError("Branching is longer than the extended event sequence")
    tail = _allocate(events, p, rng, PairwiseLags.from_times(events), start=start)
    return BranchingStructure(np.concatenate([b.parents, tail]))


# ---------------------------------------------------------------------------
# Conjugate and MH updates
# ---------------------------------------------------------------------------

def sample_mu(b: BranchingStructure, T: float, priors: PriorConfig, rng: np.random.Generator) -> float:
    """mu | B ~ Gamma(mu_shape + |S_0|, mu_rate + T)."""
    return float(rng.gamma(priors.mu_shape + b.n_background, 1.0 / (priors.mu_rate + T)))


def sample_truncated_gamma_unit(shape: float, rate: float, rng: np.random.Generator) -> float:
    """Gamma(shape, rate) restricted to (0, 1) by inverse CDF; rate 0 gives Beta(shape, 1)."""
    if rate <= 1e-12:
        return float(min(rng.random() ** (1.0 / shape), np.nextafter(1.0, 0.0)))
    upper_mass = gammainc(shape, rate)
    if not upper_mass >= 1e-300:
        raise NumericalError(f"Degenerate truncated-Gamma mass on (0, 1): shape={shape:.4g}, rate={rate:.4g}")
    draw = gammaincinv(shape, rng.random() * upper_mass) / rate
    return float(np.clip(draw, np.finfo(float).tiny, np.nextafter(1.0, 0.0)))


def sample_kappa(
    b: BranchingStructure,
    events,
    kernel: TriggeringKernel,
    T: float,
    priors: PriorConfig,
    rng: np.random.Generator,
) -> float:
    """kappa | B, h ~ Gamma(kappa_shape + sum|S_j|, kappa_rate + sum H(T - t_j)) on (0, 1)."""
    events = np.asarray(events, dtype=float)
    n_triggered = b.n_events - b.n_background
    hazard = float(kernel.cdf(T - events).sum()) if events.size else 0.0
    return sample_truncated_gamma_unit(priors.kappa_shape + n_triggered, priors.kappa_rate + hazard, rng)


def beta_log_target(log_beta: float, lags: np.ndarray, gaps: np.ndarray, kappa: float, beta_upper: float) -> float:
    """
    Log conditional of log(beta) for the Exponential kernel under a
    Uniform(0, beta_upper) prior, including the log-scale Jacobian.
    """
    beta = np.exp(log_beta)
    if not 0 < beta < beta_upper:
        return -np.inf
    hazard = -np.expm1(-beta * gaps).sum()
    return float((lags.size + 1) * log_beta - beta * lags.sum() - kappa * hazard)


def sample_beta_exponential(
    b: BranchingStructure,
    events,
    kappa: float,
    T: float,
    priors: PriorConfig,
    rng: np.random.Generator,
    current: float,
    scale: Optional[AdaptiveScale] = None,
    iteration: int = 0,
    adapt: bool = False,
) -> float:
    """One adaptive random-walk MH step on log(beta)."""
    events = np.asarray(events, dtype=float)
    scale = scale if scale is not None else AdaptiveScale()
    lags = b.lags(events)
    gaps = T - events
    log_cur = np.log(current)
    log_prop = log_cur + scale.scale * rng.standard_normal()
    log_ratio = beta_log_target(log_prop, lags, gaps, kappa, priors.beta_upper) - beta_log_target(
        log_cur, lags, gaps, kappa, priors.beta_upper
    )
    accepted = metropolis_accept(log_ratio, rng)
    scale.record(accepted, iteration, adapt)
    return float(np.exp(log_prop)) if accepted else float(current)


def dp_log_acceptance(kappa: float, events, T: float, current: TriggeringKernel, proposal: TriggeringKernel) -> float:
    """log of min{1, exp(-kappa sum_j [H*(T - t_j) - H(T - t_j)])} before the min."""
    if kappa == 0 or proposal is current:
        return 0.0
    gaps = T - np.asarray(events, dtype=float)
    return float(-kappa * (proposal.cdf(gaps) - current.cdf(gaps)).sum())


def sample_kernel_dp(
    b: BranchingStructure,
    events,
    kappa: float,
    T: float,
    crp: Optional[CrpState],
    cfg: DpConfig,
    alpha_dp: float,
    current: LognormalMixture,
    rng: np.random.Generator,
):
    """
    CRP sweep on the current log-lags, a G* draw from the DP posterior, and an
    MH accept/reject of the induced kernel against the integrated hazard.

    Returns (kernel, crp_state, accepted). The CRP state is kept even when the
    proposal is rejected.
    """
    events = np.asarray(events, dtype=float)
    crp = crp_sweep(b.lags(events), crp, cfg, alpha_dp, rng)
    proposal = posterior_dp_draw(crp, alpha_dp, cfg, rng)
    accepted = metropolis_accept(dp_log_acceptance(kappa, events, T, current, proposal), rng)
    return (proposal if accepted else current), crp, accepted


# ---------------------------------------------------------------------------
# Chain
# ---------------------------------------------------------------------------

@dataclass
class HawkesState:
    """Current values of every Hawkes-block unknown."""
    mu: float
    kappa: float
    kernel: TriggeringKernel
    branching: BranchingStructure
    alpha_dp: Optional[float] = None
    # CRP label of each event's triggering lag, -1 for background or unseated
    lag_labels: Optional[np.ndarray] = None

    @property
    def params(self) -> HawkesParams:
        return HawkesParams(self.mu, self.kappa, self.kernel)


class HawkesSampler:
    """
    Systematic-scan Gibbs sampler over (B, mu, kappa, kernel, alpha_DP) for a
    fixed event sequence on [0, T].
    """

    def __init__(
        self,
        events,
        T: float,
        kernel_kind: str,
        priors: PriorConfig,
        rng: np.random.Generator,
        target_accept: float = 0.44,
        state: Optional[HawkesState] = None,
        model_tag: Optional[str] = None,
    ):
        """
        Args:
            events: Event times, strictly increasing, inside [0, T]
            T: Window end (window start is 0)
            kernel_kind: "exponential" or "dp"
            priors: Prior configuration
            rng: Owned random generator
            target_accept: Target acceptance rate for the beta random walk
            state: Optional starting state (default initialisation otherwise)
            model_tag: Label used in log messages and errors
        """
        if kernel_kind not in KERNEL_KINDS:
            raise ParameterError(f"Unknown kernel kind: {kernel_kind}")
        self.events = np.asarray(events, dtype=float)
        if self.events.size == 0:
            raise ParameterError("Cannot fit a Hawkes process to an empty event series")
        if not T > 0 or self.events[-1] > T or self.events[0] < 0:
            raise ParameterError(f"Events must lie in [0, T] with T > 0 (T={T})")
        self.T = float(T)
        self.kernel_kind = kernel_kind
        self.priors = priors
        self.rng = rng
        self.model_tag = model_tag or kernel_kind
        self.pairs = PairwiseLags.from_times(self.events)
        self.beta_scale = AdaptiveScale(target=target_accept)
        self.kernel_proposals = 0
        self.kernel_accepted = 0
        self.state = state if state is not None else self.initial_state()

    def initial_state(self) -> HawkesState:
        """mu = n / (2T), kappa = 0.5, beta = 1 or a DP prior kernel, B from one allocation pass."""
        mu = self.events.size / (2.0 * self.T)
        kappa = 0.5
        alpha_dp = None
        if self.kernel_kind == "exponential":
            kernel = ExponentialKernel(1.0)
        else:
            alpha_dp = self.priors.dp.alpha_shape / self.priors.dp.alpha_rate
            kernel = prior_kernel_draw(self.priors.dp, alpha_dp, self.rng)
        b = sample_branching(self.events, HawkesParams(mu, kappa, kernel), self.rng, self.pairs)
        labels = np.full(self.events.size, -1, dtype=int) if self.kernel_kind == "dp" else None
        return HawkesState(mu, kappa, kernel, b, alpha_dp, labels)

    def sweep(self, iteration: int = 0, adapt: bool = False) -> HawkesState:
        """One full scan B -> mu -> kappa -> kernel -> alpha_DP."""
        s = self.state
        rng = self.rng
        b = sample_branching(self.events, s.params, rng, self.pairs)
        mu = sample_mu(b, self.T, self.priors, rng)
        kappa = sample_kappa(b, self.events, s.kernel, self.T, self.priors, rng)

        alpha_dp = s.alpha_dp
        labels = s.lag_labels
        if self.kernel_kind == "exponential":
            beta = sample_beta_exponential(
                b, self.events, kappa, self.T, self.priors, rng, s.kernel.beta,
                scale=self.beta_scale, iteration=iteration, adapt=adapt,
            )
            kernel = ExponentialKernel(beta)
        else:
            triggered = b.triggered()
            if labels is None or labels.size != self.events.size:
                labels = np.full(self.events.size, -1, dtype=int)
            crp = CrpState(labels=labels[triggered].copy())
            kernel, crp, accepted = sample_kernel_dp(
                b, self.events, kappa, self.T, crp, self.priors.dp, alpha_dp, s.kernel, rng
            )
            self.kernel_proposals += 1
            self.kernel_accepted += int(accepted)
            if not accepted:
                logger.trace(f"DP kernel proposal rejected at iteration {iteration}")
            labels = np.full(self.events.size, -1, dtype=int)
            labels[triggered] = crp.labels
            alpha_dp = sample_concentration(alpha_dp, crp.n_lags, crp.n_components, self.priors.dp, rng)

        self.state = HawkesState(mu, kappa, kernel, b, alpha_dp, labels)
        return self.state

    def acceptance(self) -> Dict[str, float]:
        if self.kernel_kind == "exponential":
            return {"beta": self.beta_scale.acceptance_rate}
        rate = self.kernel_accepted / self.kernel_proposals if self.kernel_proposals else 0.0
        return {"dp_kernel": rate}

    def run(self, cfg: ChainConfig, chain: int = 0) -> List[PosteriorDraw]:
        """Run cfg.iterations scans and return the retained post-burn-in draws."""
        draws: List[PosteriorDraw] = []
        logger.debug(f"🔗 {self.model_tag} chain {chain}: {cfg.iterations} iterations, {self.events.size} events")
        for it in range(cfg.iterations):
            if it == cfg.burn_in:
                self.beta_scale.reset_counts()
                self.kernel_proposals = self.kernel_accepted = 0
            try:
                with np.errstate(over="ignore", under="ignore"):
                    s = self.sweep(iteration=it, adapt=it < cfg.burn_in)
            except (ParameterError, FloatingPointError, ZeroDivisionError) as e:
                raise NumericalError(str(e), iteration=it, model=self.model_tag) from e
            except NumericalError as e:
                if e.iteration is None:
                    raise NumericalError(str(e), iteration=it, model=self.model_tag) from e
                raise

            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                p = s.params
                draws.append(
                    PosteriorDraw(
                        hawkes=p,
                        branching=s.branching,
                        iteration=it,
                        chain=chain,
                        alpha_dp=s.alpha_dp,
                        loglik=loglik(self.events, p, self.T),
                    )
                )
            if cfg.log_every and (it + 1) % cfg.log_every == 0:
                logger.debug(
                    f"🔁 {self.model_tag} chain {chain}: iteration {it + 1}/{cfg.iterations} "
                    f"mu={s.mu:.4f} kappa={s.kappa:.3f}"
                )
        return draws


def run_hawkes_chain(
    series: MarkedEventSeries,
    kernel_kind: str,
    priors: PriorConfig,
    cfg: ChainConfig,
    rng: np.random.Generator,
    chain: int = 0,
    model_tag: Optional[str] = None,
) -> List[PosteriorDraw]:
    """
    Fit the Hawkes block to the exceedance times of `series`.

    Times are shifted so the window starts at 0; excesses are never read.
    """
    draws, _ = run_hawkes_chain_with_metrics(series, kernel_kind, priors, cfg, rng, chain, model_tag)
    return draws


def run_hawkes_chain_with_metrics(
    series: MarkedEventSeries,
    kernel_kind: str,
    priors: PriorConfig,
    cfg: ChainConfig,
    rng: np.random.Generator,
    chain: int = 0,
    model_tag: Optional[str] = None,
):
    """run_hawkes_chain plus a ChainMetrics record."""
    tag = model_tag or kernel_kind
    start = time.perf_counter()
    sampler = HawkesSampler(
        series.times - series.window_start,
        series.duration,
        kernel_kind,
        priors,
        rng,
        target_accept=cfg.target_accept,
        model_tag=tag,
    )
    draws = sampler.run(cfg, chain=chain)
    elapsed = time.perf_counter() - start
    metrics = ChainMetrics(
        model=tag,
        chain=chain,
        iterations=cfg.iterations,
        wall_time=elapsed,
        acceptance=sampler.acceptance(),
        kernel_proposals_accepted=sampler.kernel_accepted,
    )
    logger.info(
        f"✅ {tag} chain {chain} done in {elapsed:.1f}s: {len(draws)} draws retained, "
        + ", ".join(f"{k} acceptance {v:.2f}" for k, v in metrics.acceptance.items())
    )
    return draws, metrics


# ---------------------------------------------------------------------------
# Convergence summaries
# ---------------------------------------------------------------------------

def split_rhat(chains) -> float:
    """
    Split-R-hat for an (m chains x n draws) array: each chain is halved and
    the between/within variance ratio is computed over the 2m halves.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    half = x.shape[1] // 2
    if half < 2:
        return float("nan")
    halves = np.concatenate([x[:, :half], x[:, -half:]], axis=0)
    n = halves.shape[1]
    within = halves.var(axis=1, ddof=1).mean()
    between = n * halves.mean(axis=1).var(ddof=1)
    if within <= 0:
        return float("nan") if between > 0 else 1.0
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def summarize_samples(chains: Sequence[np.ndarray]) -> Dict[str, float]:
    """Mean, sd, median, 95% interval and split-R-hat for one scalar parameter."""
    n = min(len(c) for c in chains)
    stacked = np.stack([np.asarray(c[:n], dtype=float) for c in chains])
    flat = np.concatenate([np.asarray(c, dtype=float) for c in chains])
    lo, med, hi = np.percentile(flat, [2.5, 50.0, 97.5])
    return {
        "mean": float(flat.mean()),
        "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        "median": float(med),
        "q025": float(lo),
        "q975": float(hi),
        "rhat": split_rhat(stacked),
    }


def hawkes_trace(draws: Sequence[PosteriorDraw]) -> Dict[str, np.ndarray]:
    """Scalar traces of a chain: mu, kappa, loglik and beta or alpha_DP."""
    trace = {
        "mu": np.array([d.hawkes.mu for d in draws]),
        "kappa": np.array([d.hawkes.kappa for d in draws]),
        "loglik": np.array([d.loglik for d in draws]),
    }
    if draws and draws[0].kernel_kind == "exponential":
        trace["beta"] = np.array([d.hawkes.kernel.beta for d in draws])
    elif draws:
        trace["alpha_dp"] = np.array([d.alpha_dp for d in draws])
    return trace


def summarize_chains(chains: Sequence[Sequence[PosteriorDraw]]) -> Dict[str, Dict[str, float]]:
    """Per-parameter posterior summaries with split-R-hat across chains."""
    traces = [hawkes_trace(c) for c in chains if len(c)]
    if not traces:
        return {}
    return {name: summarize_samples([t[name] for t in traces]) for name in traces[0]}


def representative_indices(n_draws: int, count: int) -> np.ndarray:
    """Evenly spaced positions into a pooled list of n_draws retained draws."""
    if n_draws == 0:
        return np.empty(0, dtype=int)
    return np.unique(np.linspace(0, n_draws - 1, min(count, n_draws)).round().astype(int))
