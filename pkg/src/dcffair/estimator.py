"""Passive fair-rate estimation from one station's arrivals and departures.

The queue length q(t) = #{arrivals <= t} - #{departures <= t} reconstructs
busy periods as the maximal intervals with q >= 1. Only inter-departure
gaps that lie entirely inside one busy period are rate samples; gaps that
span an empty queue measure offered load, not service. The point estimate
is 1/mean(sample), its standard error follows from the delta method, and a
departures-over-busy-time ratio is kept alongside as a secondary statistic.
Lag-1 autocorrelation of the samples is reported as a diagnostic but not
corrected for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotEnoughBacklogError, TraceFormatError
from .traceio import EventTrace


@dataclass(frozen=True)
class BusyPeriod:
    """Maximal interval with a non-empty queue."""

    start: float
    end: float
    departures: int


@dataclass(frozen=True)
class RateEstimate:
    rate_pps: float
    stderr_pps: float
    ci95: tuple[float, float]
    samples: int
    busy_fraction: float
    lag1_autocorr: float
    ratio_rate_pps: float


@dataclass(frozen=True)
class ConvergencePoint:
    """Estimate from the first requested_m inter-departure samples."""

    requested_m: int
    used_m: int
    truncated: bool
    rate_pps: float
    ci_low: float
    ci_high: float
    ci_width: float
    ratio_rate_pps: float


def _validated(events: EventTrace) -> tuple[np.ndarray, np.ndarray]:
    if len(events) == 0:
        raise NotEnoughBacklogError("empty event trace", busy_fraction=0.0)
    if np.unique(events.station).size > 1:
        raise TraceFormatError(
            "event trace mixes stations; filter with for_station() first"
        )
    arr = events.arrival
    dep = events.departure
    if np.any(np.diff(arr) < 0):
        raise TraceFormatError("arrivals are not time ordered")
    if np.any(np.diff(dep) < 0):
        raise TraceFormatError(
            "FIFO violation: departures not ordered as arrivals"
        )
    if np.any(dep <= arr):
        raise TraceFormatError("departure at or before arrival")
    return arr, dep


def detect_busy_periods(events: EventTrace) -> list[BusyPeriod]:
    """Busy periods of one station's queue, disjoint and time ordered."""
    arr, dep = _validated(events)
    periods: list[BusyPeriod] = []
    n = arr.size
    ai = di = 0
    q = 0
    start = 0.0
    dep_count = 0
    while di < n:
        # arrivals first on ties, so back-to-back packets bridge the point
        if ai < n and arr[ai] <= dep[di]:
            if q == 0:
                start = float(arr[ai])
                dep_count = 0
            q += 1
            ai += 1
        else:
            q -= 1
            dep_count += 1
            if q == 0:
                periods.append(BusyPeriod(start=start, end=float(dep[di]),
                                          departures=dep_count))
            di += 1
    return periods


def _period_samples(events: EventTrace,
                    min_period_departures: int) -> tuple[list[np.ndarray],
                                                         list[BusyPeriod],
                                                         float]:
    periods = detect_busy_periods(events)
    dep = events.departure
    qualifying = [p for p in periods if p.departures >= min_period_departures]
    samples = []
    for p in qualifying:
        inside = dep[(dep > p.start) & (dep <= p.end)]
        samples.append(np.diff(inside))
    span = float(dep.max() - events.arrival.min())
    busy_time = sum(p.end - p.start for p in periods)
    busy_fraction = busy_time / span if span > 0 else 0.0
    return samples, qualifying, busy_fraction


def _delta_method(samples: np.ndarray) -> tuple[float, float]:
    # rate = 1/mean; Var(rate) ~ Var(mean) / mean^4
    mean = float(np.mean(samples))
    rate = 1e6 / mean
    if samples.size < 2:
        return rate, 0.0
    sd = float(np.std(samples, ddof=1))
    stderr = 1e6 * sd / (np.sqrt(samples.size) * mean * mean)
    return rate, stderr


def estimate_fair_rate(events: EventTrace,
                       min_period_departures: int = 2) -> RateEstimate:
    """Fair-rate estimate in packets per second, with a 95% CI.

    Uses inter-departure gaps strictly inside busy periods that contain at
    least min_period_departures departures. The first gap of each period is
    kept. Raises when no qualifying samples exist.
    """
    per_period, qualifying, busy_fraction = _period_samples(
        events, min_period_departures)
    if not per_period or sum(s.size for s in per_period) == 0:
        raise NotEnoughBacklogError(
            "no busy period holds enough departures for a rate sample "
            f"(busy fraction {busy_fraction:.3f})",
            busy_fraction=busy_fraction,
        )
    samples = np.concatenate(per_period)
    rate, stderr = _delta_method(samples)
    if samples.size >= 3 and np.std(samples) > 0:
        x, y = samples[:-1], samples[1:]
        lag1 = float(np.corrcoef(x, y)[0, 1])
    else:
        lag1 = 0.0
    busy_us = sum(p.end - p.start for p in qualifying)
    deps = sum(p.departures for p in qualifying)
    return RateEstimate(
        rate_pps=rate,
        stderr_pps=stderr,
        ci95=(rate - 1.96 * stderr, rate + 1.96 * stderr),
        samples=int(samples.size),
        busy_fraction=busy_fraction,
        lag1_autocorr=lag1,
        ratio_rate_pps=1e6 * deps / busy_us,
    )


def convergence_report(events: EventTrace, sample_counts: list[int],
                       min_period_departures: int = 2) -> list[ConvergencePoint]:
    """Prefix estimates over growing sample counts.

    For each m, uses the first m inter-departure samples in trace order. An
    m beyond the available samples is truncated to all of them and flagged.
    The ratio estimate for a prefix covers the busy time walked through up
    to the departure that closes the m-th sample.
    """
    per_period, qualifying, busy_fraction = _period_samples(
        events, min_period_departures)
    if not per_period or sum(s.size for s in per_period) == 0:
        raise NotEnoughBacklogError(
            "no qualifying busy periods "
            f"(busy fraction {busy_fraction:.3f})",
            busy_fraction=busy_fraction,
        )
    all_samples = np.concatenate(per_period)
    sizes = [s.size for s in per_period]
    dep = events.departure
    report: list[ConvergencePoint] = []
    for requested in sample_counts:
        if requested < 1:
            raise ValueError("sample counts must be >= 1")
        used = min(requested, all_samples.size)
        truncated = used < requested
        prefix = all_samples[:used]
        rate, stderr = _delta_method(prefix)
        # walk periods to locate the departure closing the used-th sample
        remaining = used
        busy_us = 0.0
        deps = 0
        for p, size in zip(qualifying, sizes):
            inside = dep[(dep > p.start) & (dep <= p.end)]
            if remaining >= size:
                remaining -= size
                busy_us += p.end - p.start
                deps += p.departures
                if remaining == 0:
                    break
            else:
                closing = inside[remaining]  # departure ending the sample
                busy_us += float(closing) - p.start
                deps += remaining + 1
                remaining = 0
                break
        ratio = 1e6 * deps / busy_us if busy_us > 0 else float("nan")
        report.append(ConvergencePoint(
            requested_m=requested,
            used_m=int(used),
            truncated=truncated,
            rate_pps=rate,
            ci_low=rate - 1.96 * stderr,
            ci_high=rate + 1.96 * stderr,
            ci_width=2 * 1.96 * stderr,
            ratio_rate_pps=ratio,
        ))
    return report
