"""Trade-based microstructure measures.

Every sign-dependent measure takes the form mean over trades of
sign * f(price, mid, size): effective half-spread uses f = price - mid with
the mid looked up at the last grid point at or before the trade, realized
half-spread uses the mid a fixed lag later, Kyle's lambda regresses per-
bucket mid changes on signed USDC flow. Roll and Abdi-Ranaldo need no sign.
All spread measures are in probability points; lambda is prob pp per USDC;
Amihud is |return| per USDC.

The measure code path is source-agnostic: on-chain, loose-inferred, and
strict-inferred trade frames flow through identically, so authoritative
trades can be injected without touching measure logic. Null results are
returned as None and surface as NaN in measure rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InsufficientBuckets, InsufficientTrades, NotConverged

DEFAULT_STEP_S = 60.0
DEFAULT_LAG_S = 60.0
DEFAULT_AMIHUD_BUCKET_S = 86_400.0
DEFAULT_AR_BUCKET_S = 3_600.0
SWEEP_STEPS_S = (1.0, 10.0, 60.0, 300.0)

MEASURE_NAMES = [
    "effective_half", "realized_half", "roll", "abdi_ranaldo",
    "kyle_lambda", "amihud", "gh_c", "gh_phi",
]

MEASURE_ROW_COLUMNS = [
    "market_id", "source", "n_trades",
    "effective_half", "effective_half_weighted", "realized_half",
    "roll", "abdi_ranaldo", "kyle_lambda", "amihud",
    "gh_c", "gh_phi", "sample_step",
]


@dataclass
class MidSeries:
    """Grid-sampled mid prices for one market; gaps are explicit NaNs."""

    ts: np.ndarray
    mid: np.ndarray
    step: float

    def __post_init__(self):
        self.ts = np.asarray(self.ts, dtype=float)
        self.mid = np.asarray(self.mid, dtype=float)
        if self.ts.shape != self.mid.shape:
            raise ValueError("ts/mid length mismatch")

    @classmethod
    def from_samples(cls, samples: pd.DataFrame, step: float) -> "MidSeries":
        """Build from a book-sample frame (one market already selected)."""
        frame = samples.sort_values("ts")
        return cls(frame["ts"].to_numpy(), frame["mid"].to_numpy(), step)

    def lookup(self, t) -> np.ndarray:
        """Mid at the last grid point <= t; NaN before the first point."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.ts, t, side="right") - 1
        out = np.full(t.shape, np.nan)
        ok = idx >= 0
        out[ok] = self.mid[idx[ok]]
        return out


def _sorted_trades(trades: pd.DataFrame) -> pd.DataFrame:
    return trades.sort_values("ts", kind="stable")


def effective_half_spread(trades: pd.DataFrame, mids: MidSeries,
                          dollar_weighted: bool = False) -> float | None:
    """Mean of sign * (price - mid); None when no trade has a usable mid."""
    if trades.empty:
        return None
    mid = mids.lookup(trades["ts"].to_numpy())
    ok = ~np.isnan(mid)
    if not ok.any():
        return None
    contrib = trades["sign"].to_numpy(dtype=float)[ok] * (
        trades["price"].to_numpy(dtype=float)[ok] - mid[ok])
    if dollar_weighted:
        w = trades["size_usdc"].to_numpy(dtype=float)[ok]
        if w.sum() <= 0:
            return None
        return float(np.average(contrib, weights=w))
    return float(contrib.mean())


def realized_half_spread(trades: pd.DataFrame, mids: MidSeries,
                         lag: float = DEFAULT_LAG_S) -> float | None:
    """Mean of sign * (price - mid at t+lag); trades without a future mid drop."""
    if trades.empty:
        return None
    future = mids.lookup(trades["ts"].to_numpy() + lag)
    ok = ~np.isnan(future)
    if not ok.any():
        return None
    contrib = trades["sign"].to_numpy(dtype=float)[ok] * (
        trades["price"].to_numpy(dtype=float)[ok] - future[ok])
    return float(contrib.mean())


def _bucket_edges(mids: MidSeries, bucket: float) -> np.ndarray:
    lo = int(np.ceil(mids.ts[0] / bucket))
    hi = int(np.floor(mids.ts[-1] / bucket))
    if hi < lo:
        return np.empty(0)
    return np.arange(lo, hi + 1, dtype=float) * bucket


def kyle_lambda(trades: pd.DataFrame, mids: MidSeries,
                bucket: float | None = None) -> float | None:
    """OLS slope (with intercept) of bucket mid change on signed USDC flow."""
    if trades.empty or mids.ts.size < 2:
        return None
    bucket = mids.step if bucket is None else bucket
    edges = _bucket_edges(mids, bucket)
    if edges.size < 2:
        return None
    edge_mid = mids.lookup(edges)
    dmid = np.diff(edge_mid)
    flow = np.zeros(edges.size - 1)
    ts = trades["ts"].to_numpy(dtype=float)
    signed = trades["sign"].to_numpy(dtype=float) * trades["size_usdc"].to_numpy(dtype=float)
    slot = np.searchsorted(edges, ts, side="right") - 1
    inside = (slot >= 0) & (slot < flow.size)
    np.add.at(flow, slot[inside], signed[inside])
    ok = ~np.isnan(dmid)
    dmid, flow = dmid[ok], flow[ok]
    if np.count_nonzero(flow) < 3:
        return None
    var = np.var(flow)
    if var == 0.0:
        return None  # degenerate regressor
    return float(np.cov(flow, dmid, bias=True)[0, 1] / var)


def amihud(trades: pd.DataFrame, mids: MidSeries,
           bucket: float = DEFAULT_AMIHUD_BUCKET_S) -> float | None:
    """Mean over buckets of |mid return| / USDC volume; zero-volume buckets skip."""
    if trades.empty or mids.ts.size < 2:
        return None
    edges = _bucket_edges(mids, bucket)
    if edges.size < 2:
        # thin coverage: fall back to one bucket spanning the series
        edges = np.array([mids.ts[0], mids.ts[-1]])
    edge_mid = mids.lookup(edges)
    volume = np.zeros(edges.size - 1)
    ts = trades["ts"].to_numpy(dtype=float)
    slot = np.searchsorted(edges, ts, side="right") - 1
    inside = (slot >= 0) & (slot < volume.size)
    np.add.at(volume, slot[inside], trades["size_usdc"].to_numpy(dtype=float)[inside])
    start, end = edge_mid[:-1], edge_mid[1:]
    ok = (volume > 0.0) & ~np.isnan(start) & ~np.isnan(end) & (start > 0.0)
    if not ok.any():
        return None
    ratios = np.abs(end[ok] / start[ok] - 1.0) / volume[ok]
    return float(ratios.mean())


def roll(prices) -> float | None:
    """2 sqrt(-autocov) of trade-price first differences.

    Uses trade prices only, so the estimate is invariant to the mid sample
    step by construction. Positive autocovariance returns None (flagged
    null); exactly zero returns 0.
    """
    p = np.asarray(prices, dtype=float)
    d = np.diff(p)
    if d.size < 3:
        raise InsufficientTrades(f"{d.size} price changes, need >= 3")
    centered = d - d.mean()
    autocov = float(np.mean(centered[1:] * centered[:-1]))
    if autocov > 0.0:
        return None
    return float(2.0 * np.sqrt(-autocov))


def abdi_ranaldo(close, high, low) -> float:
    """Close/high-low spread estimator on adjacent buckets.

    s = 2 sqrt(max(0, mean_t (c_t - eta_t)(c_t - eta_{t+1}))) with
    eta = (high + low) / 2.
    """
    c = np.asarray(close, dtype=float)
    h = np.asarray(high, dtype=float)
    lo = np.asarray(low, dtype=float)
    if not c.shape == h.shape == lo.shape:
        raise ValueError("close/high/low shape mismatch")
    if c.size < 2:
        raise InsufficientBuckets(f"{c.size} buckets, need >= 2")
    eta = (h + lo) / 2.0
    terms = (c[:-1] - eta[:-1]) * (c[:-1] - eta[1:])
    return float(2.0 * np.sqrt(max(0.0, float(np.mean(terms)))))


def bucket_chl(ts, values, bucket: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(close, high, low) of a series per time bucket, empty buckets skipped."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(ts, kind="stable")
    ts, values = ts[order], values[order]
    slot = np.floor(ts / bucket).astype(np.int64)
    close, high, low = [], [], []
    for s in np.unique(slot):
        v = values[slot == s]
        close.append(v[-1])
        high.append(v.max())
        low.append(v.min())
    return np.array(close), np.array(high), np.array(low)


def gh_decompose(effective: float | None, realized: float | None) -> tuple[float, float]:
    """Split the effective half-spread into transitory c and residual phi.

    c is the realized half-spread at the configured lag, phi the remainder,
    so c + phi reproduces the effective half-spread identically.
    """
    if effective is None or realized is None or \
            not np.isfinite(effective) or not np.isfinite(realized):
        raise NotConverged("effective or realized half-spread unavailable")
    return float(realized), float(effective - realized)


def compute_measure_row(trades: pd.DataFrame, mids: MidSeries, market_id: str,
                        source: str, step: float = DEFAULT_STEP_S,
                        lag: float = DEFAULT_LAG_S,
                        amihud_bucket: float = DEFAULT_AMIHUD_BUCKET_S,
                        ar_bucket: float = DEFAULT_AR_BUCKET_S) -> dict:
    """One MeasureRow: every measure for one market/source/step, NaN on null."""
    trades = _sorted_trades(trades)
    eff = effective_half_spread(trades, mids)
    eff_w = effective_half_spread(trades, mids, dollar_weighted=True)
    rea = realized_half_spread(trades, mids, lag=lag)
    try:
        roll_v = roll(trades["price"].to_numpy())
    except InsufficientTrades:
        roll_v = None
    try:
        c, h, lo = bucket_chl(trades["ts"].to_numpy(), trades["price"].to_numpy(),
                              ar_bucket)
        ar_v = abdi_ranaldo(c, h, lo)
    except InsufficientBuckets:
        ar_v = None
    lam = kyle_lambda(trades, mids, bucket=step)
    ami = amihud(trades, mids, bucket=amihud_bucket)
    try:
        gh_c, gh_phi = gh_decompose(eff, rea)
    except NotConverged:
        gh_c = gh_phi = None

    def _nan(x):
        return np.nan if x is None else x

    return {
        "market_id": market_id,
        "source": source,
        "n_trades": int(len(trades)),
        "effective_half": _nan(eff),
        "effective_half_weighted": _nan(eff_w),
        "realized_half": _nan(rea),
        "roll": _nan(roll_v),
        "abdi_ranaldo": _nan(ar_v),
        "kyle_lambda": _nan(lam),
        "amihud": _nan(ami),
        "gh_c": _nan(gh_c),
        "gh_phi": _nan(gh_phi),
        "sample_step": step,
    }


def measure_rows_frame(rows: list[dict]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=MEASURE_ROW_COLUMNS)
    return frame.sort_values("market_id", kind="stable").reset_index(drop=True)


def sample_step_sweep(trades: pd.DataFrame, mids_by_step: dict[float, MidSeries],
                      market_id: str, source: str,
                      lag: float = DEFAULT_LAG_S) -> pd.DataFrame:
    """All measures recomputed per sample step; Roll must not move."""
    rows = [
        compute_measure_row(trades, mids_by_step[s], market_id, source,
                            step=s, lag=lag)
        for s in sorted(mids_by_step)
    ]
    return measure_rows_frame(rows)
