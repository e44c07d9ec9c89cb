"""
Hawkes process core: conditional intensity, compensator, likelihoods,
branching-based simulation and the interval cluster partition.

Branching vectors follow the 1-based convention B_i in {0, ..., i-1}:
0 marks a background event and j >= 1 points at the j-th event.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from loguru import logger
from scipy.special import xlogy

from .dp_kernel import LognormalMixture
from .errors import ParameterError, StructuralError


@dataclass(frozen=True)
class ExponentialKernel:
    """h(x) = beta * exp(-beta * x) on x > 0."""
    beta: float

    kind = "exponential"

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ParameterError(f"Exponential kernel rate must be positive, got beta={self.beta}")

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, np.log(self.beta) - self.beta * x, -np.inf)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, self.beta * np.exp(-self.beta * np.maximum(x, 0.0)), 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -np.expm1(-self.beta * np.maximum(x, 0.0))

    def sample_truncated(self, rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Lags conditioned on lo <= lag < hi (memoryless: lo + truncated Exp(beta))."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        span_mass = -np.expm1(-self.beta * (hi - lo))
        u = rng.random(lo.size) * span_mass
        return lo - np.log1p(-u) / self.beta

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "beta": float(self.beta)}


TriggeringKernel = Union[ExponentialKernel, LognormalMixture]


def kernel_from_dict(data: Dict[str, Any]) -> TriggeringKernel:
    """Rebuild a kernel from its to_dict() form."""
    if data["kind"] == "exponential":
        return ExponentialKernel(float(data["beta"]))
    if data["kind"] == "dp":
        return LognormalMixture.from_dict(data)
    raise ParameterError(f"Unknown kernel kind: {data['kind']}")


@dataclass(frozen=True)
class HawkesParams:
    """Background rate mu, branching ratio kappa and triggering kernel h."""
    mu: float
    kappa: float
    kernel: TriggeringKernel

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise ParameterError(f"Background rate must be finite and nonnegative, got mu={self.mu}")
        if not (np.isfinite(self.kappa) and 0 <= self.kappa < 1):
            raise ParameterError(f"Branching ratio must lie in [0, 1), got kappa={self.kappa}")


@dataclass(frozen=True, eq=False)
class BranchingStructure:
    """Latent parent assignments B (1-based, 0 = background)."""
    parents: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.parents)
        if b.ndim != 1 or (b.size and not np.issubdtype(b.dtype, np.integer)):
            raise StructuralError("Branching must be a 1-d integer array")
        b = b.astype(np.int64)
        object.__setattr__(self, "parents", b)
        if b.size == 0:
            return
        if b[0] != 0:
            raise StructuralError("The first event must be a background event (B_1 = 0)")
        if np.any(b < 0) or np.any(b > np.arange(b.size)):
            raise StructuralError("Every parent must precede its child (0 <= B_i < i)")

    @property
    def n_events(self) -> int:
        return int(self.parents.size)

    @property
    def background_mask(self) -> np.ndarray:
        return self.parents == 0

    @property
    def n_background(self) -> int:
        return int(np.count_nonzero(self.parents == 0))

    def offspring_counts(self) -> np.ndarray:
        """|S_0|, |S_1|, ..., |S_n| as an array of length n + 1."""
        return np.bincount(self.parents, minlength=self.n_events + 1)

    def triggered(self) -> np.ndarray:
        """Positions (0-based) of events with a parent."""
        return np.flatnonzero(self.parents > 0)

    def lags(self, times: np.ndarray) -> np.ndarray:
        """Triggering lags x_i = t_i - t_{B_i} for all triggered events."""
        times = np.asarray(times, dtype=float)
        if times.size != self.n_events:
            raise StructuralError(f"Branching covers {self.n_events} events but {times.size} times were given")
        idx = self.triggered()
        return times[idx] - times[self.parents[idx] - 1]


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    """Interval clusters C_k = {i : s_k <= t_i < s_{k+1}} between background events."""
    boundaries: np.ndarray
    assignment: np.ndarray
    boundary_times: np.ndarray
    window_end: float

    @property
    def n_clusters(self) -> int:
        return int(self.boundaries.size)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clusters)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)


@dataclass(frozen=True, eq=False)
class PairwiseLags:
    """All lags t_i - t_j with j < i, as flat (rows, cols, lags) arrays."""
    rows: np.ndarray
    cols: np.ndarray
    lags: np.ndarray

    @classmethod
    def from_times(cls, times: np.ndarray) -> "PairwiseLags":
        times = np.asarray(times, dtype=float)
        rows, cols = np.tril_indices(times.size, -1)
        return cls(rows, cols, times[rows] - times[cols])


@dataclass(frozen=True, eq=False)
class HawkesPath:
    """
    Simulated events on a window, with parents in combined (history + new) indexing.

    parents[i] is 0 for a background event, j in 1..n_history for a history
    parent, and n_history + k for the k-th new event (1-based).
    """
    times: np.ndarray
    parents: np.ndarray
    n_history: int = 0

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def background_mask(self) -> np.ndarray:
        return self.parents == 0

    @property
    def branching(self) -> BranchingStructure:
        if self.n_history:
            raise StructuralError("A history-conditioned path has no self-contained branching structure")
        return BranchingStructure(self.parents)


def intensity(t: float, history, p: HawkesParams) -> float:
    """lambda(t | H_t) = mu + sum_{t_i < t} kappa h(t - t_i)."""
    history = np.asarray(history, dtype=float)
    past = history[history < t]
    if past.size == 0 or p.kappa == 0:
        return float(p.mu)
    return float(p.mu + p.kappa * p.kernel.density(t - past).sum())


def intensity_at_events(times: np.ndarray, p: HawkesParams, pairs: Optional[PairwiseLags] = None) -> np.ndarray:
    """lambda(t_i | H_{t_i}) for every event, each conditioning only on earlier events."""
    times = np.asarray(times, dtype=float)
    if pairs is None:
        pairs = PairwiseLags.from_times(times)
    excitation = np.bincount(pairs.rows, weights=p.kernel.density(pairs.lags), minlength=times.size)
    return p.mu + p.kappa * excitation


def intensity_on_grid(grid, times, p: HawkesParams) -> np.ndarray:
    """Conditional intensity evaluated at each grid point (plot-ready)."""
    grid = np.asarray(grid, dtype=float)
    times = np.asarray(times, dtype=float)
    lag = grid[:, None] - times[None, :]
    return p.mu + p.kappa * np.where(lag > 0, p.kernel.density(np.where(lag > 0, lag, 1.0)), 0.0).sum(axis=1)


def _background_mass(mu: float, span: float) -> float:
    return mu * span if mu > 0 else 0.0


def compensator(T: float, events, p: HawkesParams) -> float:
    """Lambda(T) = mu T + kappa sum_j H(T - t_j)."""
    events = np.asarray(events, dtype=float)
    triggered = p.kappa * p.kernel.cdf(T - events).sum() if p.kappa > 0 else 0.0
    return float(_background_mass(p.mu, T) + triggered)


def loglik_conditional(b: BranchingStructure, events, p: HawkesParams, T: float) -> float:
    """
    Log-likelihood of the event times given the branching structure:
    |S_0| log mu - mu T + sum_j [|S_j| log kappa - kappa H(T - t_j)] + sum_{B_i>0} log h(t_i - t_{B_i}).
    """
    events = np.asarray(events, dtype=float)
    lags = b.lags(events)
    if np.any(lags <= 0):
        raise StructuralError("Every triggering lag must be positive")
    counts = b.offspring_counts()
    ll = xlogy(counts[0], p.mu) - _background_mass(p.mu, T)
    ll += xlogy(counts[1:], p.kappa).sum() - p.kappa * p.kernel.cdf(T - events).sum()
    if lags.size:
        ll += p.kernel.log_density(lags).sum()
    return float(ll)


def loglik(events, p: HawkesParams, T: float) -> float:
    """Unconditional log-likelihood sum_i log lambda(t_i | H_{t_i}) - Lambda(T)."""
    events = np.asarray(events, dtype=float)
    with np.errstate(divide="ignore"):
        log_lam = np.log(intensity_at_events(events, p)).sum()
    return float(log_lam - compensator(T, events, p))


def window_loglik(history, events, p: HawkesParams, start: float, end: float) -> float:
    """
    Log-likelihood of the events in (start, end] conditional on earlier history:
    sum_i log lambda(t_i | history and earlier events) - [Lambda(end) - Lambda(start)].
    """
    history = np.asarray(history, dtype=float)
    events = np.asarray(events, dtype=float)
    lam = intensity_at_events(events, p)
    if history.size and p.kappa > 0 and events.size:
        lag = events[:, None] - history[None, :]
        lam = lam + p.kappa * p.kernel.density(lag).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_lam = np.log(lam).sum()
    increment = _background_mass(p.mu, end - start)
    if p.kappa > 0:
        increment += p.kappa * (
            (p.kernel.cdf(end - history) - p.kernel.cdf(start - history)).sum()
            + p.kernel.cdf(end - events).sum()
        )
    return float(log_lam - increment)


def simulate(
    p: HawkesParams,
    T: float,
    rng: np.random.Generator,
    history: Optional[Sequence[float]] = None,
    window_start: float = 0.0,
) -> HawkesPath:
    """
    Exact branching (cluster) simulation on [window_start, T).

    Immigrants arrive as a Poisson(mu) process on the window; every event,
    including history events before window_start, has Poisson(kappa * mass)
    offspring where mass is the kernel probability of landing in the window,
    and offspring lags come from the kernel conditioned on that interval.
    """
    if not np.isfinite(T) or not np.isfinite(window_start):
        raise ParameterError("Simulation window must be finite")
    hist = np.asarray(history if history is not None else [], dtype=float)
    m = hist.size
    span = T - window_start
    if span <= 0:
        return HawkesPath(times=np.empty(0), parents=np.empty(0, dtype=np.int64), n_history=m)

    n_imm = rng.poisson(_background_mass(p.mu, span))
    imm = window_start + rng.random(n_imm) * span

    # new events in creation order; ids are 1-based over history + new
    new_times = [imm]
    new_parents = [np.zeros(n_imm, dtype=np.int64)]
    gen_times = np.concatenate([hist, imm])
    gen_ids = np.arange(1, m + n_imm + 1)
    next_id = m + n_imm + 1

    while gen_times.size and p.kappa > 0:
        lo = np.maximum(0.0, window_start - gen_times)
        hi = T - gen_times
        mass = np.clip(p.kernel.cdf(hi) - p.kernel.cdf(lo), 0.0, 1.0)
        counts = rng.poisson(p.kappa * mass)
        if counts.sum() == 0:
            break
        rep = np.repeat(np.arange(gen_times.size), counts)
        child = gen_times[rep] + p.kernel.sample_truncated(rng, lo[rep], hi[rep])
        keep = (child >= window_start) & (child < T)
        child = child[keep]
        new_times.append(child)
        new_parents.append(gen_ids[rep][keep])
        gen_times = child
        gen_ids = np.arange(next_id, next_id + child.size)
        next_id += child.size

    times = np.concatenate(new_times)
    parents = np.concatenate(new_parents)
    order = np.argsort(times, kind="stable")
    position = np.empty(times.size, dtype=np.int64)
    position[order] = np.arange(times.size)

    parents = parents[order]
    is_new = parents > m
    parents[is_new] = m + position[parents[is_new] - m - 1] + 1
    logger.trace(f"Simulated {times.size} events on [{window_start}, {T}) with {m} history events")
    return HawkesPath(times=times[order], parents=parents, n_history=m)


def clusters_from_branching(b: BranchingStructure, events, T: float) -> ClusterPartition:
    """Split events into intervals that start at each background event."""
    events = np.asarray(events, dtype=float)
    bg = b.background_mask
    boundaries = np.flatnonzero(bg)
    return ClusterPartition(
        boundaries=boundaries,
        assignment=np.cumsum(bg) - 1,
        boundary_times=events[boundaries],
        window_end=float(T),
    )
