"""Conditional fairness distribution over success ownership, and Jain's index.

Successive successful slots are modeled as i.i.d. ownership draws. Fix a
tagged station and one contender and keep only the successes belonging to
either; with beta the contender's share of that reduced stream, the window
that ends at the l-th tagged success contains K contender successes with

    P[K = k | l] = C(k + l - 1, k) * (1 - beta)^l * beta^k

which is the negative binomial counting failures before the l-th success.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ConditioningError,
    ConsistencyError,
    HorizonNotFoundError,
    TruncationError,
    UndefinedIndexError,
)

_EXACT_COMB_LIMIT = 50  # exact integer binomials up to k + l = 50
_K_CAP = 2_000_000
_L_CAP = 1_000_000


@dataclass(frozen=True)
class ConditionalPmf:
    """Truncated pmf of contender successes per l tagged successes."""

    l: int
    beta: float
    k_max: int
    pmf: np.ndarray
    tail_mass: float


@dataclass(frozen=True)
class FairnessWindowStats:
    """Per-window success counts and Jain index summary."""

    window_len: int
    counts: np.ndarray      # shape (windows, stations)
    stations: np.ndarray    # station ids, column order of counts
    jain: np.ndarray        # per-window index
    jain_mean: float
    jain_p05: float
    jain_p95: float


def _pmf_term(k: int, l: int, beta: float) -> float:
    # C(k+l-1, k) (1-beta)^l beta^k, exact combinatorics for small orders
    # and log-domain gammas beyond to avoid overflow.
    if k + l <= _EXACT_COMB_LIMIT:
        return math.comb(k + l - 1, k) * (1.0 - beta) ** l * beta ** k
    log_term = (
        math.lgamma(k + l) - math.lgamma(k + 1) - math.lgamma(l)
        + l * math.log1p(-beta) + k * math.log(beta)
    )
    return math.exp(log_term)


def conditional_pmf(q_tagged: float, q_contender: float, l: int,
                    trunc_tol: float = 1e-9) -> ConditionalPmf:
    """Distribution of contender successes in the l-th-tagged-success window.

    q_tagged and q_contender are the stations' success-ownership
    probabilities; only their ratio enters through
    beta = q_contender / (q_tagged + q_contender). The pmf is truncated at
    the smallest k_max whose remaining tail mass is <= trunc_tol.

    Sum(pmf) + tail_mass is 1 to within 1e-12 by construction. For
    distributions needing upward of ~1e5 entries the reported tail_mass is
    limited by per-term floating-point accuracy and can sit slightly above
    trunc_tol even though the true remaining mass is provably below it.
    """
    if q_tagged <= 0.0:
        raise ConditioningError(
            "tagged ownership probability must be positive to condition on "
            f"its successes, got {q_tagged}"
        )
    if q_contender < 0.0:
        raise ValueError("contender ownership probability must be >= 0")
    if q_tagged + q_contender > 1.0 + 1e-12:
        raise ValueError("ownership probabilities must sum to at most 1")
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    if trunc_tol <= 0.0:
        raise ValueError("trunc_tol must be positive")

    beta = q_contender / (q_tagged + q_contender)
    if beta == 0.0:
        return ConditionalPmf(l=l, beta=0.0, k_max=0,
                              pmf=np.array([1.0]), tail_mass=0.0)

    # Exact integer combinatorics while k + l stays small; beyond that, a
    # log-domain seed term feeds the ratio recurrence
    # pmf_{k} = pmf_{k-1} * beta * (k + l - 1) / k, which never forms the
    # overflowing binomial and drifts by only ~1 ulp per step (re-running
    # lgamma per term would carry its absolute error at huge arguments into
    # every entry). Log-domain reseeding carries the recurrence across
    # stretches where the head of the distribution underflows.
    terms: list[float] = []
    cumulative = 0.0
    compensation = 0.0  # Kahan: tail terms must not be absorbed by the sum
    k = 0
    term = _pmf_term(0, l, beta)
    while True:
        terms.append(term)
        y = term - compensation
        t = cumulative + y
        compensation = (t - cumulative) - y
        cumulative = t
        if 1.0 - cumulative <= trunc_tol:
            break
        if k + l > _EXACT_COMB_LIMIT and term > 0.0:
            # Past the mode the term ratio r < 1 keeps falling, so the true
            # remaining tail is at most term * r / (1 - r). This certifies
            # termination for huge distributions whose accumulated sum is
            # limited by floating-point term accuracy (~1e-9 relative once
            # lgamma arguments reach 1e6) rather than by mass.
            ratio = beta * (k + l) / (k + 1)
            if ratio < 1.0 and term * ratio / (1.0 - ratio) <= trunc_tol:
                break
        k += 1
        if k > _K_CAP:
            raise TruncationError(
                f"tail did not reach {trunc_tol} within {_K_CAP} terms "
                f"(l={l}, beta={beta})"
            )
        if k + l <= _EXACT_COMB_LIMIT or term < 1e-300:
            # below the normal float range the recurrence cannot even
            # climb out of the smallest denormal; reseed from log domain
            term = _pmf_term(k, l, beta)
        else:
            term = term * beta * (k + l - 1) / k
    return ConditionalPmf(l=l, beta=beta, k_max=k,
                          pmf=np.array(terms), tail_mass=1.0 - cumulative)


def pmf_moments(cpmf: ConditionalPmf) -> tuple[float, float]:
    """Mean and variance of the conditional distribution.

    Returns the closed forms l*beta/(1-beta) and l*beta/(1-beta)^2 after
    cross-checking them against moments recomputed from the truncated pmf;
    a disagreement beyond 1e-6 (relative to max(1, value)) means the two
    computation routes drifted apart and is raised as a consistency failure.
    """
    if cpmf.tail_mass > 1e-9:
        raise TruncationError(
            f"tail mass {cpmf.tail_mass:.3e} exceeds 1e-9; retruncate first"
        )
    beta, l = cpmf.beta, cpmf.l
    mean = l * beta / (1.0 - beta)
    variance = l * beta / (1.0 - beta) ** 2

    k = np.arange(cpmf.pmf.size, dtype=float)
    mean_num = float(np.dot(k, cpmf.pmf))
    var_num = float(np.dot((k - mean_num) ** 2, cpmf.pmf))
    if abs(mean_num - mean) > 1e-6 * max(1.0, abs(mean)):
        raise ConsistencyError(
            f"pmf mean {mean_num!r} vs closed form {mean!r}"
        )
    if abs(var_num - variance) > 1e-6 * max(1.0, abs(variance)):
        raise ConsistencyError(
            f"pmf variance {var_num!r} vs closed form {variance!r}"
        )
    return mean, variance


def jain_index(x: Sequence[float] | np.ndarray) -> float:
    """Jain's fairness index (sum x)^2 / (n * sum x^2), in (0, 1]."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise UndefinedIndexError("empty allocation vector")
    if np.any(x < 0.0):
        raise ValueError("allocation entries must be nonnegative")
    total = float(np.sum(x))
    square = float(np.sum(x * x))
    if square == 0.0:
        raise UndefinedIndexError("all-zero allocation has no fairness index")
    return total * total / (x.size * square)


def windowed_fairness(owners: Sequence[int] | np.ndarray, window_len: int,
                      n_stations: int | None = None) -> FairnessWindowStats:
    """Short-term fairness over disjoint windows of consecutive successes.

    owners is the success-ownership sequence (station id per successful
    slot, in order). The trailing partial window is discarded. When
    n_stations is given, stations 0..n_stations-1 form the columns even if
    some never appear; otherwise the distinct ids in the trace do.
    """
    owners = np.asarray(owners)
    if owners.ndim != 1:
        raise ValueError("owners must be a 1-d sequence")
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    if owners.size < window_len:
        raise ValueError(
            f"trace has {owners.size} successes, need >= {window_len}"
        )
    if n_stations is not None:
        stations = np.arange(n_stations)
        codes = owners.astype(np.int64)
        if codes.min() < 0 or codes.max() >= n_stations:
            raise ValueError("owner id outside 0..n_stations-1")
    else:
        stations, codes = np.unique(owners, return_inverse=True)
    n_windows = owners.size // window_len
    trimmed = codes[: n_windows * window_len].reshape(n_windows, window_len)
    counts = np.zeros((n_windows, stations.size), dtype=np.int64)
    for w in range(n_windows):
        counts[w] = np.bincount(trimmed[w], minlength=stations.size)
    sums = counts.sum(axis=1, dtype=float)
    squares = (counts.astype(float) ** 2).sum(axis=1)
    jains = sums * sums / (stations.size * squares)
    return FairnessWindowStats(
        window_len=window_len,
        counts=counts,
        stations=stations,
        jain=jains,
        jain_mean=float(np.mean(jains)),
        jain_p05=float(np.quantile(jains, 0.05)),
        jain_p95=float(np.quantile(jains, 0.95)),
    )


def short_term_horizon(q: Sequence[float] | np.ndarray, tagged: int,
                       contender: int, delta: float, eps: float) -> int:
    """Smallest l with P[|K - E[K|l]| > delta * E[K|l]] <= eps.

    Scans l upward; beyond l = 4096 the scan switches to geometric strides
    with a bisection refinement, which is exact as long as the deviation
    probability is eventually decreasing in l (it is, by concentration of
    the negative binomial).
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must be in (0, 1]")
    q = np.asarray(q, dtype=float)
    q_t, q_c = float(q[tagged]), float(q[contender])
    trunc = min(1e-9, eps * 1e-3) if eps < 1.0 else 1e-9

    def deviation_prob(l: int) -> float:
        cpmf = conditional_pmf(q_t, q_c, l, trunc_tol=trunc)
        mean = l * cpmf.beta / (1.0 - cpmf.beta)
        k = np.arange(cpmf.pmf.size, dtype=float)
        inside = np.abs(k - mean) <= delta * mean
        # Truncated tail counts as deviating; it sits far above the mean.
        return float(np.sum(cpmf.pmf[~inside])) + cpmf.tail_mass

    linear_cap = 4096
    for l in range(1, min(linear_cap, _L_CAP) + 1):
        if deviation_prob(l) <= eps:
            return l
    lo = linear_cap  # known failing
    hi = linear_cap
    while True:
        hi = min(int(hi * 1.5) + 1, _L_CAP)
        if deviation_prob(hi) <= eps:
            break
        lo = hi
        if hi >= _L_CAP:
            raise HorizonNotFoundError(
                f"no l <= {_L_CAP} meets deviation {delta} at eps {eps}"
            )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if deviation_prob(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


def empirical_conditional_pmf(
    owners: Sequence[int] | np.ndarray, tagged: int, contender: int, l: int
) -> tuple[np.ndarray, int]:
    """Histogram of contender successes per l-tagged-success window.

    Walks the ownership trace, keeping only tagged/contender successes, and
    cuts a window at every l-th tagged success. Returns (pmf estimate
    indexed by k, number of complete windows). The trailing partial window
    is discarded.
    """
    owners = np.asarray(owners)
    reduced = owners[(owners == tagged) | (owners == contender)]
    is_tagged = (reduced == tagged).astype(np.int64)
    tagged_cum = np.cumsum(is_tagged)
    n_windows = int(tagged_cum[-1]) // l if reduced.size else 0
    if n_windows == 0:
        return np.zeros(0), 0
    # Window w ends at the (w+1)*l-th tagged success; count contenders
    # between consecutive boundaries.
    boundaries = np.searchsorted(tagged_cum, np.arange(1, n_windows + 1) * l)
    contenders_cum = np.concatenate(
        [[0], np.cumsum(1 - is_tagged)]
    )
    ends = contenders_cum[boundaries + 1]
    starts = np.concatenate([[0], ends[:-1]])
    ks = ends - starts
    counts = np.bincount(ks)
    return counts / n_windows, n_windows


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance between two pmfs on {0, 1, 2, ...}."""
    size = max(p.size, q.size)
    pp = np.zeros(size)
    qq = np.zeros(size)
    pp[: p.size] = p
    qq[: q.size] = q
    return 0.5 * float(np.sum(np.abs(pp - qq)))
