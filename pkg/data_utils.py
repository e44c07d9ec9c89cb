"""
Data utilities for turning raw CSV series into train/test exceedances

Input format requirements:
- CSV with a header row
- Time column: ISO-8601 dates or plain numbers
- Value column: numeric
- Dated input is converted to days since the first observation (t = 0)
"""

from dataclasses import replace
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from hawkes_pot.errors import DataError
from hawkes_pot.evt_core import (
    MarkedEventSeries,
    RawSeries,
    ThresholdSpec,
    extract_exceedances,
    set_scale_factor,
)

DAYS_PER_YEAR = 365.25


def _parse_times(raw: pd.Series) -> Tuple[np.ndarray, dict]:
    numeric = pd.to_numeric(raw, errors="coerce")
    if numeric.notna().all():
        return numeric.to_numpy(dtype=float), {"time_unit": "numeric", "origin": None}

    dates = pd.to_datetime(raw, errors="coerce", format="ISO8601")
    bad = dates.isna()
    if bad.any():
        pos = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: header line plus 1-based numbering
        raise DataError(f"Unparseable time '{raw.iloc[pos]}' at line {pos + 2}")
    origin = dates.min()
    days = (dates - origin) / pd.Timedelta(days=1)
    return days.to_numpy(dtype=float), {"time_unit": "days", "origin": origin.isoformat()}


def ingest(
    path: Union[str, Path],
    time_column: str = "time",
    value_column: str = "value",
    allow_duplicates: bool = False,
) -> RawSeries:
    """Read a `time,value` CSV into a RawSeries
    Args:
        path: CSV file with a header row
        time_column: Name of the time column (ISO date or numeric)
        value_column: Name of the numeric value column
        allow_duplicates: Keep repeated timestamps (only for the daily-aggregate-sum transform)
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Input file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"Input file {path} is empty") from e
    if frame.empty:
        raise DataError(f"Input file {path} has no data rows")
    for col in (time_column, value_column):
        if col not in frame.columns:
            raise DataError(f"Column '{col}' not found in {path} (columns: {', '.join(frame.columns)})")

    times, meta = _parse_times(frame[time_column].str.strip())
    values = pd.to_numeric(frame[value_column], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        pos = int(np.flatnonzero(bad)[0])
        raise DataError(f"Unparseable value '{frame[value_column].iloc[pos]}' at line {pos + 2}")

    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    dup = np.flatnonzero(np.diff(times) == 0)
    if dup.size and not allow_duplicates:
        offending = frame[time_column].iloc[order[dup[0] + 1]]
        raise DataError(f"Duplicate timestamp '{offending}' (select the daily-aggregate-sum transform to combine rows)")
    if times.size:
        times = times - times[0]

    meta["source"] = str(path)
    logger.info(f"📥 Ingested {times.size} rows from {path} ({meta['time_unit']} time axis)")
    if dup.size:
        # repeated days are summed by the aggregate transform before validation
        return _aggregate(times, values, meta)
    return RawSeries(times, values, metadata=meta)


def _aggregate(times: np.ndarray, values: np.ndarray, meta: dict) -> RawSeries:
    days, inverse = np.unique(np.floor(times), return_inverse=True)
    sums = np.bincount(np.asarray(inverse).reshape(-1), weights=values, minlength=days.size)
    return RawSeries(days, sums, metadata={**meta, "aggregated": "daily-sum"})


def transform(series: RawSeries, kind: str) -> RawSeries:
    """Apply the configured transform
    Args:
        series: Raw series
        kind: identity | negative-log-return | daily-aggregate-sum
    """
    if kind == "identity":
        return series
    if kind == "negative-log-return":
        if np.any(series.values <= 0):
            pos = int(np.flatnonzero(series.values <= 0)[0])
            raise DataError(f"Log returns need positive prices (value {series.values[pos]} at position {pos})")
        returns = -np.diff(np.log(series.values))
        return RawSeries(series.timestamps[1:], returns, metadata={**series.metadata, "transform": kind})
    if kind == "daily-aggregate-sum":
        if series.metadata.get("aggregated"):
            return series
        return _aggregate(series.timestamps, series.values, {**series.metadata, "transform": kind})
    raise DataError(f"Unknown transform: {kind}")


def split_boundary(series: RawSeries, rule: str) -> float:
    """Training end T for a split rule
    Rules:
        fraction:0.8         T at 80% of the observation span
        time:800             T given on the series time axis
        date:2015-01-01      T at a calendar date (dated input only)
        trailing:3652.5      test window is the last 3652.5 time units
        trailing-years:10    test window is the last 10 years (dated input)
    """
    if len(series) == 0:
        raise DataError("Cannot split an empty series")
    t0, t1 = float(series.timestamps[0]), float(series.timestamps[-1])
    kind, _, arg = rule.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "fraction":
            boundary = t0 + float(arg) * (t1 - t0)
        elif kind == "time":
            boundary = float(arg)
        elif kind == "trailing":
            boundary = t1 - float(arg)
        elif kind == "trailing-years":
            boundary = t1 - float(arg) * DAYS_PER_YEAR
        elif kind == "date":
            origin = series.metadata.get("origin")
            if origin is None:
                raise DataError("A date split needs a dated time column")
            boundary = (pd.Timestamp(arg) - pd.Timestamp(origin)) / pd.Timedelta(days=1)
        else:
            raise DataError(f"Unknown split rule '{rule}'")
    except ValueError as e:
        raise DataError(f"Malformed split rule '{rule}': {e}") from e
    if not t0 < boundary < t1:
        raise DataError(f"Split point {boundary:.6g} is not strictly inside the observation span [{t0:.6g}, {t1:.6g}]")
    return float(boundary)


def split(
    series: RawSeries,
    rule: str,
    threshold: ThresholdSpec,
    scale_policy: Union[str, float] = "median",
) -> Tuple[MarkedEventSeries, MarkedEventSeries]:
    """Split into train/test exceedances using train-only threshold and scale factor
    Args:
        series: Transformed raw series
        rule: Split rule (see split_boundary)
        threshold: Threshold rule, resolved on the training values only
        scale_policy: Scale-factor policy, applied to training excesses only
    """
    boundary = split_boundary(series, rule)
    in_train = series.timestamps <= boundary
    if not in_train.any():
        raise DataError("Training split is empty")

    train_raw = RawSeries(series.timestamps[in_train], series.values[in_train], metadata=series.metadata)
    test_raw = RawSeries(series.timestamps[~in_train], series.values[~in_train], metadata=series.metadata)

    train = extract_exceedances(train_raw, threshold, window_start=float(series.timestamps[0]), window_end=boundary)
    if train.n_events == 0:
        raise DataError("No training exceedances above the threshold")
    train = set_scale_factor(train, scale_policy)
    train = replace(train, metadata={**train.metadata, **series.metadata, "split_rule": rule, "split_point": boundary})

    fixed = ThresholdSpec("absolute", train.threshold, negate=threshold.negate)
    test = extract_exceedances(test_raw, fixed, window_start=boundary, window_end=float(series.timestamps[-1]))
    test = replace(
        test,
        scale_factor=train.scale_factor,
        metadata={**test.metadata, "threshold_source": "train", "train_threshold": train.threshold},
    )
    logger.info(
        f"✂️ Split at t={boundary:.2f}: {train.n_events} train / {test.n_events} test exceedances "
        f"(u={train.threshold:.6g}, c={train.scale_factor:.6g})"
    )
    return train, test
