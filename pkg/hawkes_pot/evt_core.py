"""
Extreme value primitives: Generalised Pareto Distribution (GPD) density,
CDF, quantile and sampling, plus threshold-exceedance extraction that turns
a raw series into a marked event series (t_i, y_i).
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Union

import numpy as np
from loguru import logger

from .errors import DataError, ParameterError

# Below this |xi| the exponential (xi = 0) form is used
XI_ZERO_TOL = 1e-8

QUANTILE_METHOD = "linear"


@dataclass(frozen=True)
class GpdParams:
    """GPD scale sigma (excess units) and shape xi (dimensionless)."""
    sigma: float
    xi: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ParameterError(f"GPD scale must be positive, got sigma={self.sigma}")
        if not np.isfinite(self.xi):
            raise ParameterError(f"GPD shape must be finite, got xi={self.xi}")

    @property
    def upper_endpoint(self) -> float:
        """Finite upper endpoint -sigma/xi when xi < 0, else infinity."""
        if self.xi < -XI_ZERO_TOL:
            return -self.sigma / self.xi
        return np.inf


def gpd_loglik(y, sigma, xi) -> np.ndarray:
    """
    Vectorised GPD log density, broadcasting y, sigma and xi together.

    Points outside the support (y < 0 or 1 + xi*y/sigma <= 0) get -inf.
    """
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(~(sigma > 0)):
        raise ParameterError("GPD scale must be positive")

    log_sigma = np.log(sigma)
    near_zero = np.abs(xi) < XI_ZERO_TOL
    safe_xi = np.where(near_zero, 1.0, xi)
    arg = safe_xi * y / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        general = -log_sigma - (1.0 / safe_xi + 1.0) * np.log1p(arg)
    general = np.where(arg > -1.0, general, -np.inf)
    out = np.where(near_zero, -log_sigma - y / sigma, general)
    return np.where(y >= 0, out, -np.inf)


def gpd_logpdf(y, p: GpdParams):
    """
    Log density of GPD(sigma, xi) at y.

    Returns -inf when y lies outside the support.
    """
    out = gpd_loglik(y, p.sigma, p.xi)
    return float(out) if out.ndim == 0 else out


def gpd_logpdf_original_scale(y, p: GpdParams, scale_factor: float):
    """Log density of y when GPD(p) is fitted to y / c: log g(y/c) - log c."""
    if not scale_factor > 0:
        raise ParameterError(f"Scale factor must be positive, got {scale_factor}")
    return gpd_logpdf(np.asarray(y, dtype=float) / scale_factor, p) - np.log(scale_factor)


def gpd_cdf(z, p: GpdParams):
    """G(z | sigma, xi); 0 below zero and 1 at or above a finite endpoint."""
    z = np.asarray(z, dtype=float)
    zc = np.maximum(z, 0.0)
    if abs(p.xi) < XI_ZERO_TOL:
        out = -np.expm1(-zc / p.sigma)
    else:
        arg = p.xi * zc / p.sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.expm1(-np.log1p(arg) / p.xi)
        out = np.where(arg > -1.0, out, 1.0)
    out = np.clip(np.where(z > 0, out, 0.0), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def gpd_survival(z, p: GpdParams):
    """1 - G(z | sigma, xi), i.e. Pr(Y > z)."""
    cdf = gpd_cdf(z, p)
    return 1.0 - cdf


def gpd_quantile(q, p: GpdParams):
    """Inverse CDF of GPD(sigma, xi) for q in [0, 1)."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q >= 1)):
        raise ParameterError("GPD quantile levels must lie in [0, 1)")
    log_surv = np.log1p(-q)
    if abs(p.xi) < XI_ZERO_TOL:
        out = -p.sigma * log_surv
    else:
        out = p.sigma * np.expm1(-p.xi * log_surv) / p.xi
    return float(out) if out.ndim == 0 else out


def gpd_sample(p: GpdParams, rng: np.random.Generator, size=None):
    """Inverse-CDF draw(s) from GPD(sigma, xi); deterministic given rng state."""
    u = rng.random(size)
    return gpd_quantile(u, p)


@dataclass(frozen=True, eq=False)
class RawSeries:
    """Pre-threshold observations r_t at strictly increasing times."""
    timestamps: np.ndarray
    values: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1:
            raise DataError("Timestamps and values must be 1-d arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            bad = int(np.argmin(np.diff(t) > 0)) + 1
            raise DataError(f"Timestamps must be strictly increasing (violated at position {bad})")

    def __len__(self) -> int:
        return int(self.timestamps.size)


@dataclass(frozen=True)
class ThresholdSpec:
    """
    How to pick the threshold u.

    kind is "upper" (percentile level q of the values), "lower" (values are
    negated first, then the upper (100 - q) percentile is used) or
    "absolute" (u given directly; negate selects the lower tail).
    """
    kind: str
    level: float
    negate: bool = False

    def __post_init__(self):
        if self.kind not in ("upper", "lower", "absolute"):
            raise ParameterError(f"Unknown threshold kind: {self.kind}")
        if self.kind != "absolute" and not 0 < self.level < 100:
            raise ParameterError(f"Percentile level must lie in (0, 100), got {self.level}")
        if self.kind == "lower":
            object.__setattr__(self, "negate", True)

    @classmethod
    def parse(cls, text: str) -> "ThresholdSpec":
        """Parse "upper:95", "lower:5", "absolute:3.2" or "absolute-lower:0.03"."""
        try:
            kind, level = text.split(":", 1)
            level = float(level)
        except ValueError as e:
            raise ParameterError(f"Malformed threshold spec '{text}'") from e
        kind = kind.strip().lower()
        if kind == "absolute-lower":
            return cls("absolute", level, negate=True)
        return cls(kind, level)

    def resolve(self, values: np.ndarray) -> float:
        """Threshold u on the (possibly negated) value scale."""
        if self.kind == "absolute":
            return float(self.level)
        v = -values if self.negate else values
        if v.size == 0:
            raise DataError("Cannot compute a percentile threshold from an empty series")
        q = self.level if self.kind == "upper" else 100.0 - self.level
        return float(np.percentile(v, q, method=QUANTILE_METHOD))


@dataclass(frozen=True, eq=False)
class MarkedEventSeries:
    """Exceedance times and excesses y_i = r_i - u on the window [window_start, window_end]."""
    window_end: float
    threshold: float
    times: np.ndarray
    excesses: np.ndarray
    scale_factor: float = 1.0
    window_start: float = 0.0
    negated: bool = False
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.excesses, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "excesses", y)
        if t.shape != y.shape or t.ndim != 1:
            raise DataError("Event times and excesses must be 1-d arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise DataError("Event times must be strictly increasing")
        if np.any(y <= 0):
            raise DataError("All excesses must be positive")
        if not (np.isfinite(self.scale_factor) and self.scale_factor > 0):
            raise DataError(f"Scale factor must be positive, got {self.scale_factor}")
        if t.size and (t[0] < self.window_start or t[-1] > self.window_end):
            raise DataError("Event times must lie inside the observation window")

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def duration(self) -> float:
        return float(self.window_end - self.window_start)

    @property
    def scaled_excesses(self) -> np.ndarray:
        """Excesses divided by the training scale factor c."""
        return self.excesses / self.scale_factor

    def original_values(self) -> np.ndarray:
        """Reconstruct the raw values r_i = u + y_i (sign restored for the lower tail)."""
        v = self.excesses + self.threshold
        return -v if self.negated else v


def extract_exceedances(
    series: RawSeries,
    spec: ThresholdSpec,
    window_start: Optional[float] = None,
    window_end: Optional[float] = None,
) -> MarkedEventSeries:
    """
    Keep observations strictly above the threshold and record their excesses.

    Args:
        series: Raw observations
        spec: Threshold rule
        window_start: Start of the observation window (defaults to the first timestamp)
        window_end: End of the observation window (defaults to the last timestamp)

    Returns:
        MarkedEventSeries with scale_factor 1 (see set_scale_factor)
    """
    values = -series.values if spec.negate else series.values
    u = spec.resolve(series.values)
    mask = values > u

    if window_start is None:
        window_start = float(series.timestamps[0]) if len(series) else 0.0
    if window_end is None:
        window_end = float(series.timestamps[-1]) if len(series) else window_start

    events = MarkedEventSeries(
        window_end=float(window_end),
        threshold=u,
        times=series.timestamps[mask],
        excesses=values[mask] - u,
        window_start=float(window_start),
        negated=spec.negate,
        metadata={
            "threshold_kind": spec.kind,
            "threshold_level": spec.level,
            "quantile_method": QUANTILE_METHOD,
        },
    )
    logger.debug(
        f"📈 Extracted {events.n_events} exceedances above u={u:.6g} "
        f"({spec.kind}:{spec.level}) from {len(series)} observations"
    )
    return events


def set_scale_factor(series: MarkedEventSeries, policy: Union[str, float] = "median") -> MarkedEventSeries:
    """
    Record the training-set scale factor c used to normalise excesses.

    Args:
        series: Training exceedances
        policy: "median" (falls back to "mean"), "mean", or an explicit positive c

    Returns:
        A copy of series with scale_factor set
    """
    if not isinstance(policy, str):
        c = float(policy)
        if not (np.isfinite(c) and c > 0):
            raise ParameterError(f"Explicit scale factor must be positive and finite, got {c}")
        return replace(series, scale_factor=c, metadata={**series.metadata, "scale_policy": "explicit"})

    chain = {"median": ("median", "mean"), "mean": ("mean",)}.get(policy)
    if chain is None:
        raise ParameterError(f"Unknown scale policy: {policy}")

    positive = series.excesses[series.excesses > 0]
    for rule in chain:
        if positive.size == 0:
            break
        c = float(np.median(positive) if rule == "median" else np.mean(positive))
        if np.isfinite(c) and c > 0:
            if rule != policy:
                logger.warning(f"⚠️ Scale factor fell back to the {rule} excess (c={c:.6g})")
            return replace(series, scale_factor=c, metadata={**series.metadata, "scale_policy": rule})

    raise DataError("No valid scale factor: training excesses are empty or degenerate")
