"""Shared statistical primitives.

OLS with HC3 covariance, Wilson score intervals, exact two-sided binomial
tests, nearest-rank percentiles, and seeded RNG streams. Everything here is
a pure function; randomized procedures take explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

from .errors import EmptyInput, LeverageOne, RankDeficient

# Above this trial count the exact binomial tail sums are replaced by a
# normal approximation with continuity correction (some markets carry
# millions of events).
EXACT_BINOMIAL_MAX_N = 1_000_000

_RANK_TOL = 1e-10


@dataclass
class OlsFit:
    coefficients: np.ndarray
    hc3_standard_errors: np.ndarray
    r_squared: float
    n: int
    residuals: np.ndarray
    leverage: np.ndarray


def ols_hc3(x, y) -> OlsFit:
    """OLS fit with an HC3 heteroskedasticity-robust covariance.

    beta = (X'X)^-1 X'y; cov = (X'X)^-1 X' diag(e_i^2/(1-h_ii)^2) X (X'X)^-1.
    Raises RankDeficient on a singular design and LeverageOne when any
    observation has h_ii = 1 (its HC3 weight would be infinite).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if y.shape != (n,):
        raise ValueError(f"response shape {y.shape} does not match design ({n}, {k})")
    if n <= k:
        raise RankDeficient(f"n={n} rows for k={k} columns")

    u, s, vt = np.linalg.svd(x, full_matrices=False)
    if s[0] == 0.0 or s[-1] / s[0] < _RANK_TOL:
        raise RankDeficient("design matrix is rank deficient")

    beta = vt.T @ ((u.T @ y) / s)
    leverage = np.einsum("ij,ij->i", u, u)
    if np.any(leverage >= 1.0 - 1e-12):
        raise LeverageOne("observation with leverage 1; HC3 undefined")

    resid = y - x @ beta
    xtx_inv = (vt.T / s**2) @ vt
    w = (resid / (1.0 - leverage)) ** 2
    meat = x.T @ (x * w[:, None])
    cov = xtx_inv @ meat @ xtx_inv
    se = np.sqrt(np.diag(cov))

    has_intercept = bool(np.any(np.all(x == x[0, :], axis=0) & (x[0, :] != 0.0)))
    ssr = float(resid @ resid)
    if has_intercept:
        sst = float(np.sum((y - y.mean()) ** 2))
    else:
        sst = float(y @ y)
    if sst <= 0.0:
        r2 = 1.0 if ssr <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ssr / sst

    return OlsFit(
        coefficients=beta,
        hc3_standard_errors=se,
        r_squared=r2,
        n=n,
        residuals=resid,
        leverage=leverage,
    )


def wilson_interval(k: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clamped to [0, 1]."""
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n with n >= 1, got k={k} n={n}")
    z = float(sps.norm.ppf(0.5 + conf / 2.0))
    p = k / n
    denom = 1.0 + z * z / n
    center = p + z * z / (2.0 * n)
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    # the score bounds are analytically exact at the extremes
    lo = 0.0 if k == 0 else max(0.0, (center - half) / denom)
    hi = 1.0 if k == n else min(1.0, (center + half) / denom)
    return lo, hi


class BinomialTest(NamedTuple):
    pvalue: float
    exact: bool


def binomial_two_sided(k: int, n: int, p0: float,
                       exact_max_n: int = EXACT_BINOMIAL_MAX_N) -> BinomialTest:
    """Two-sided binomial test of H0: success rate = p0.

    Exact tail doubling (capped at 1) up to exact_max_n trials; beyond that
    a normal approximation with continuity correction, flagged via .exact.
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n with n >= 1, got k={k} n={n}")
    if n <= exact_max_n:
        lo = float(sps.binom.cdf(k, n, p0))
        hi = float(sps.binom.sf(k - 1, n, p0))
        return BinomialTest(min(1.0, 2.0 * min(lo, hi)), True)
    sd = np.sqrt(n * p0 * (1.0 - p0))
    z = (abs(k - n * p0) - 0.5) / sd
    p = 2.0 * float(sps.norm.sf(max(z, 0.0)))
    return BinomialTest(min(1.0, p), False)


def binomial_two_sided_randomized(k: int, n: int, p0: float, u: float) -> float:
    """Randomized two-sided binomial p-value, exactly U(0,1) under H0.

    The deterministic tail-doubled p-value of a discrete statistic is
    conservative (super-uniform) by construction; this variant smooths the
    atom containing k with an external uniform draw u and is the correct
    statistic for null-calibration checks.
    """
    pmf = float(sps.binom.pmf(k, n, p0))
    pl = float(sps.binom.cdf(k - 1, n, p0)) + u * pmf
    return 2.0 * min(pl, 1.0 - pl)


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*n)-th smallest value."""
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise EmptyInput("percentile of empty input")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    rank = max(1, int(np.ceil(q * arr.size)))
    return float(arr[rank - 1])


def seeded_rng(*stream: int) -> np.random.Generator:
    """Deterministic PCG64 stream keyed by a tuple of integers.

    Resample/worker i of a procedure seeded S uses seeded_rng(S, i), so
    results do not depend on scheduling or thread count.
    """
    return np.random.default_rng(list(stream))
