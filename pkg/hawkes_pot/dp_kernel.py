"""
Dirichlet-process lognormal-mixture triggering kernel.

The mixture lives on z = log(lag) with Normal components and a
Normal-Inverse-Gamma (NIG) base measure, so the conjugate updates are exact;
density and CDF on the lag scale carry the 1/x Jacobian.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from loguru import logger
from scipy.special import gammaln, logsumexp, ndtr, ndtri

from .errors import ParameterError

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DpConfig:
    """DP concentration prior Gamma(shape, rate), NIG base measure and truncation L."""
    alpha_shape: float = 2.0
    alpha_rate: float = 4.0
    mu0: float = 0.0
    k0: float = 1.0
    a0: float = 1.0
    b0: float = 1.0
    truncation: int = 1000

    def __post_init__(self):
        if self.truncation < 1:
            raise ParameterError(f"Truncation level must be >= 1, got {self.truncation}")
        for name in ("alpha_shape", "alpha_rate", "k0", "a0", "b0"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"DP hyperparameter {name} must be positive")


@dataclass(frozen=True, eq=False)
class LognormalMixture:
    """
    Lag density h(x) = sum_l w_l N(log x | m_l, s_l^2) / x.

    `truncation` records the nominal stick-breaking level L the weights came
    from; after compaction the number of stored atoms may be smaller.
    """
    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray
    truncation: int = 0

    kind = "dp"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.locations, dtype=float)
        s = np.asarray(self.scales, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", m)
        object.__setattr__(self, "scales", s)
        if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size == 0:
            raise ParameterError("Mixture weights, locations and scales must be equal-length 1-d arrays")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError(f"Mixture weights must be nonnegative and sum to 1 (sum={w.sum()})")
        if np.any(~(s > 0)):
            raise ParameterError("Mixture component scales must be positive")

    @classmethod
    def from_components(cls, weights, locations, scales) -> "LognormalMixture":
        """Build a mixture from explicit (weight, log-mean, log-sd) triples."""
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(), locations, scales, truncation=w.size)

    @property
    def n_atoms(self) -> int:
        return int(self.weights.size)

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        pos = x > 0
        if np.any(pos):
            lx = np.log(x[pos])[:, None]
            zs = (lx - self.locations) / self.scales
            with np.errstate(divide="ignore"):
                comp = np.log(self.weights) - 0.5 * zs**2 - np.log(self.scales) - _LOG_SQRT_2PI
            out[pos] = logsumexp(comp, axis=1) - lx[:, 0]
        return out

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        pos = x > 0
        if np.any(pos):
            xp = x[pos]
            zs = (np.log(xp)[:, None] - self.locations) / self.scales
            out[pos] = (np.exp(-0.5 * zs**2) / self.scales) @ self.weights / (np.sqrt(2.0 * np.pi) * xp)
        return out

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        pos = x > 0
        if np.any(pos):
            with np.errstate(divide="ignore"):
                lx = np.log(x[pos])[:, None]
            out[pos] = ndtr((lx - self.locations) / self.scales) @ self.weights
        return np.clip(out, 0.0, 1.0)

    def sample_truncated(self, rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """
        One lag per (lo, hi) pair, drawn from h conditioned on lo <= lag < hi.

        The component is picked with probability proportional to its mass in
        the interval; the lag then comes from that component's truncated
        Normal on the log scale by inverse CDF.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.size == 0:
            return np.empty(0)
        with np.errstate(divide="ignore"):
            llo = np.log(lo)[:, None]
            lhi = np.log(hi)[:, None]
        fa = ndtr((llo - self.locations) / self.scales)
        fb = ndtr((lhi - self.locations) / self.scales)
        mass = self.weights * np.maximum(fb - fa, 0.0)
        cum = np.cumsum(mass, axis=1)
        u = rng.random(lo.size) * cum[:, -1]
        comp = np.minimum((cum < u[:, None]).sum(axis=1), self.n_atoms - 1)
        rows = np.arange(lo.size)
        p = fa[rows, comp] + rng.random(lo.size) * (fb[rows, comp] - fa[rows, comp])
        p = np.clip(p, 1e-300, 1.0 - 1e-16)
        lag = np.exp(self.locations[comp] + self.scales[comp] * ndtri(p))
        return np.clip(lag, lo, np.nextafter(hi, 0.0))

    def compact(self) -> "LognormalMixture":
        """Merge atoms with identical (location, scale); the density is unchanged."""
        keys = np.stack([self.locations, self.scales], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        if uniq.shape[0] == self.n_atoms:
            return self
        w = np.bincount(inverse, weights=self.weights, minlength=uniq.shape[0])
        return LognormalMixture(w, uniq[:, 0], uniq[:, 1], truncation=self.truncation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "locations": self.locations.tolist(),
            "scales": self.scales.tolist(),
            "truncation": int(self.truncation),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LognormalMixture":
        return cls(
            np.asarray(data["weights"]),
            np.asarray(data["locations"]),
            np.asarray(data["scales"]),
            truncation=int(data.get("truncation", 0)),
        )


def mixture_density(x: float, k: LognormalMixture) -> float:
    """h(x) for a single positive lag x."""
    if not x > 0:
        raise ParameterError(f"Mixture density is defined for positive lags only, got {x}")
    return float(k.density(np.array([x]))[0])


def mixture_cdf(x: float, k: LognormalMixture) -> float:
    """H(x) = sum_l w_l Phi((log x - m_l) / s_l); 0 for x <= 0."""
    return float(k.cdf(np.array([x]))[0])


@dataclass(eq=False)
class CrpState:
    """
    Component labels for the current log-lags plus per-component (mean, variance).

    labels[i] == -1 marks a lag not yet seated; it is seated on the next sweep.
    """
    labels: np.ndarray
    means: np.ndarray = field(default_factory=lambda: np.empty(0))
    variances: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def empty(cls, n_lags: int = 0) -> "CrpState":
        return cls(labels=np.full(n_lags, -1, dtype=int))

    @property
    def n_lags(self) -> int:
        return int(self.labels.size)

    @property
    def n_components(self) -> int:
        return int(self.means.size)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n_components)


def nig_posterior(n, s1, s2, cfg: DpConfig):
    """
    NIG posterior hyperparameters given count n, sum s1 and sum of squares s2.

    Works elementwise on arrays of sufficient statistics.
    """
    k_n = cfg.k0 + n
    mu_n = (cfg.k0 * cfg.mu0 + s1) / k_n
    a_n = cfg.a0 + 0.5 * n
    b_n = cfg.b0 + 0.5 * (s2 + cfg.k0 * cfg.mu0**2 - k_n * mu_n**2)
    return mu_n, k_n, a_n, np.maximum(b_n, 1e-12)


def nig_predictive_logpdf(z, n, s1, s2, cfg: DpConfig):
    """Student-t posterior predictive log density of a new log-lag z."""
    mu_n, k_n, a_n, b_n = nig_posterior(n, s1, s2, cfg)
    df = 2.0 * a_n
    scale2 = b_n * (k_n + 1.0) / (a_n * k_n)
    return (
        gammaln(0.5 * (df + 1.0))
        - gammaln(0.5 * df)
        - 0.5 * np.log(df * np.pi * scale2)
        - 0.5 * (df + 1.0) * np.log1p((z - mu_n) ** 2 / (df * scale2))
    )


def _draw_nig(mu_n, k_n, a_n, b_n, rng: np.random.Generator):
    shape = np.broadcast(mu_n, k_n, a_n, b_n).shape
    variance = b_n / rng.gamma(a_n, size=shape)
    mean = mu_n + np.sqrt(variance / k_n) * rng.standard_normal(shape)
    return mean, variance


def crp_sweep(
    lags: np.ndarray,
    state: Optional[CrpState],
    cfg: DpConfig,
    alpha_dp: float,
    rng: np.random.Generator,
) -> CrpState:
    """
    One collapsed Chinese Restaurant Process sweep over the log-lags,
    followed by a conjugate redraw of every occupied component's parameters.
    """
    lags = np.asarray(lags, dtype=float)
    if np.any(lags <= 0):
        raise ParameterError("Triggering lags must be positive")
    n = lags.size
    if n == 0:
        return CrpState.empty()

    z = np.log(lags)
    if state is None or state.n_lags != n:
        labels = np.full(n, -1, dtype=int)
    else:
        labels = state.labels.copy()

    size = max(int(labels.max()) + 1, 1) + n
    counts = np.zeros(size)
    s1 = np.zeros(size)
    s2 = np.zeros(size)
    seated = labels >= 0
    np.add.at(counts, labels[seated], 1.0)
    np.add.at(s1, labels[seated], z[seated])
    np.add.at(s2, labels[seated], z[seated] ** 2)

    log_alpha = np.log(alpha_dp)
    prior_logpred = nig_predictive_logpdf(z, 0.0, 0.0, 0.0, cfg)

    for i in range(n):
        c = labels[i]
        if c >= 0:
            counts[c] -= 1.0
            s1[c] -= z[i]
            s2[c] -= z[i] ** 2
        occupied = np.flatnonzero(counts > 0)
        logp = np.empty(occupied.size + 1)
        logp[:-1] = np.log(counts[occupied]) + nig_predictive_logpdf(
            z[i], counts[occupied], s1[occupied], s2[occupied], cfg
        )
        logp[-1] = log_alpha + prior_logpred[i]
        p = np.exp(logp - logp.max())
        choice = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        if choice >= occupied.size:
            c = int(np.flatnonzero(counts == 0)[0])
            s1[c] = 0.0
            s2[c] = 0.0
        else:
            c = int(occupied[choice])
        labels[i] = c
        counts[c] += 1.0
        s1[c] += z[i]
        s2[c] += z[i] ** 2

    used, labels = np.unique(labels, return_inverse=True)
    labels = np.asarray(labels).reshape(-1)
    mu_n, k_n, a_n, b_n = nig_posterior(counts[used], s1[used], s2[used], cfg)
    means, variances = _draw_nig(mu_n, k_n, a_n, b_n, rng)
    return CrpState(labels=labels, means=np.atleast_1d(means), variances=np.atleast_1d(variances))


def sample_concentration(
    alpha_dp: float,
    n_lags: int,
    n_components: int,
    cfg: DpConfig,
    rng: np.random.Generator,
) -> float:
    """
    Auxiliary-variable update of alpha_DP under its Gamma prior: draw
    eta ~ Beta(alpha + 1, n), then alpha from a two-component Gamma mixture.
    """
    a, b = cfg.alpha_shape, cfg.alpha_rate
    if n_lags == 0:
        return float(rng.gamma(a, 1.0 / b))
    eta = rng.beta(alpha_dp + 1.0, n_lags)
    rate = b - np.log(eta)
    odds = (a + n_components - 1.0) / (n_lags * rate)
    shape = a + n_components if rng.random() < odds / (1.0 + odds) else a + n_components - 1.0
    return float(rng.gamma(shape, 1.0 / rate))


def stick_breaking_weights(v: np.ndarray) -> np.ndarray:
    """w_l = v_l prod_{r<l}(1 - v_r), with the residual mass folded into the last weight."""
    v = np.asarray(v, dtype=float)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    w = v * remaining
    w[-1] = max(1.0 - w[:-1].sum(), 0.0)
    return w


def posterior_dp_draw(
    state: CrpState,
    alpha_dp: float,
    cfg: DpConfig,
    rng: np.random.Generator,
) -> LognormalMixture:
    """
    Draw G* from DP(alpha + n, G0') by truncated stick-breaking and return
    the induced lognormal mixture on the lag scale (atoms compacted).
    """
    n = state.n_lags
    L = cfg.truncation
    alpha_post = alpha_dp + n
    weights = stick_breaking_weights(rng.beta(1.0, alpha_post, size=L))

    locations = np.empty(L)
    variances = np.empty(L)
    from_base = rng.random(L) < alpha_dp / alpha_post
    n_base = int(from_base.sum())
    if n_base:
        base_mean, base_var = _draw_nig(
            np.full(n_base, cfg.mu0), cfg.k0, cfg.a0, np.full(n_base, cfg.b0), rng
        )
        locations[from_base] = base_mean
        variances[from_base] = base_var
    n_emp = L - n_base
    if n_emp:
        # each lag's phi is its component's parameters
        counts = state.counts
        comp = rng.choice(state.n_components, size=n_emp, p=counts / counts.sum())
        locations[~from_base] = state.means[comp]
        variances[~from_base] = state.variances[comp]

    mixture = LognormalMixture(weights, locations, np.sqrt(variances), truncation=L).compact()
    logger.trace(f"DP draw: alpha'={alpha_post:.3f}, {mixture.n_atoms} distinct atoms")
    return mixture


def prior_kernel_draw(cfg: DpConfig, alpha_dp: float, rng: np.random.Generator) -> LognormalMixture:
    """A kernel drawn from the DP prior (no lags observed)."""
    return posterior_dp_draw(CrpState.empty(), alpha_dp, cfg, rng)
