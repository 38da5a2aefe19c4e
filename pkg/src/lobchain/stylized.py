"""Eight cross-sectional panel analytics.

SF1 longshot spread premium, SF2 depth concentration, SF3 block-clock
alignment, SF4 maker concentration, SF5 category-conditional spread,
SF6 archive-ingestion latency, SF7 self-counterparty wash share (an
explicit lower bound), SF8 depth decay near resolution.

Panel facts consume per-market summaries; per-market facts consume raw
event or trade frames. Percentiles are nearest-rank throughout.
"""

from __future__ import annotations

import bisect
import json
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import NoEvents, NoTrades
from .stats import binomial_two_sided, ols_hc3, percentile

BLOCK_GRID_MS = 2_000.0
BLOCK_ALIGN_TOL_MS = 100.0
BLOCK_ALIGN_NULL = 0.10
WASH_BLOCK_BUFFER = 128
CATEGORY_MIN_MARKETS = 10
FALLBACK_CATEGORY = "Other"

SUMMARY_COLUMNS = [
    "market_id", "mean_mid", "median_quoted_half_bps", "depth_l1", "depth_l10",
    "mean_depth_l10", "block_align_share", "block_align_pvalue", "maker_hhi",
    "category", "latency_p50", "latency_p90", "latency_p99",
    "wash_share", "wash_share_count", "seconds_to_close", "usdc_volume",
    "n_trades",
]


@dataclass
class MarketSummary:
    market_id: str
    mean_mid: float = np.nan
    median_quoted_half_bps: float = np.nan
    depth_l1: float = np.nan
    depth_l10: float = np.nan
    mean_depth_l10: float = np.nan
    block_align_share: float = np.nan
    block_align_pvalue: float = np.nan
    maker_hhi: float = np.nan
    category: str = FALLBACK_CATEGORY
    latency_p50: float = np.nan
    latency_p90: float = np.nan
    latency_p99: float = np.nan
    wash_share: float = np.nan
    wash_share_count: float = np.nan
    seconds_to_close: float = np.nan
    usdc_volume: float = np.nan
    n_trades: int = 0


def summaries_frame(summaries: Sequence[MarketSummary]) -> pd.DataFrame:
    return pd.DataFrame([vars(s) for s in summaries], columns=SUMMARY_COLUMNS)


# -- SF1: longshot spread premium --------------------------------------------

def sf1_longshot(summaries: pd.DataFrame) -> pd.DataFrame:
    """Quoted half-spread (bps) quantiles per fixed-width mean-mid bin.

    Bins are the ten fixed intervals [0,0.1), ..., [0.9,1.0]; a market lands
    in the bin holding its mean mid.
    """
    rows = []
    mids = summaries["mean_mid"].to_numpy(dtype=float)
    spreads = summaries["median_quoted_half_bps"].to_numpy(dtype=float)
    ok = np.isfinite(mids) & np.isfinite(spreads)
    bin_idx = np.clip((mids[ok] * 10).astype(int), 0, 9)
    for b in range(10):
        vals = spreads[ok][bin_idx == b]
        rows.append({
            "bin": b,
            "mid_lo": b / 10.0,
            "mid_hi": (b + 1) / 10.0,
            "markets": int(vals.size),
            "median_bps": percentile(vals, 0.5) if vals.size else np.nan,
            "p25_bps": percentile(vals, 0.25) if vals.size else np.nan,
            "p75_bps": percentile(vals, 0.75) if vals.size else np.nan,
        })
    return pd.DataFrame(rows)


# -- SF2: depth concentration -------------------------------------------------

def sf2_depth_ratio(summaries: pd.DataFrame) -> tuple[pd.DataFrame, dict]:
    """Per-market depth_l1/depth_l10 ratio and its panel quantiles."""
    d1 = summaries["depth_l1"].to_numpy(dtype=float)
    d10 = summaries["depth_l10"].to_numpy(dtype=float)
    ok = np.isfinite(d1) & np.isfinite(d10)
    zero = ok & (d10 <= 0.0)
    use = ok & (d10 > 0.0)
    ratios = pd.DataFrame({
        "market_id": summaries["market_id"].to_numpy()[use],
        "depth_ratio": d1[use] / d10[use],
    })
    vals = ratios["depth_ratio"].to_numpy()
    stats = {
        "n": int(vals.size),
        "n_zero_depth_excluded": int(zero.sum()),
        "median": percentile(vals, 0.5) if vals.size else np.nan,
        "p10": percentile(vals, 0.10) if vals.size else np.nan,
        "p90": percentile(vals, 0.90) if vals.size else np.nan,
    }
    return ratios, stats


# -- SF3: block-clock alignment ------------------------------------------------

def sf3_block_alignment(ts_ms, grid_ms: float = BLOCK_GRID_MS,
                        tol_ms: float = BLOCK_ALIGN_TOL_MS,
                        null_share: float = BLOCK_ALIGN_NULL) -> tuple[float, float]:
    """(share of events within +-tol of the nearest grid point, p-value).

    Two-sided exact binomial test of H0: share = null_share; under uniform
    timing the +-100 ms window on a 2,000 ms grid covers exactly 10%.
    """
    ts = np.asarray(ts_ms, dtype=float)
    if ts.size == 0:
        raise NoEvents("no events for block-alignment share")
    r = np.mod(ts, grid_ms)
    aligned = (r <= tol_ms) | (r >= grid_ms - tol_ms)
    k = int(aligned.sum())
    share = k / ts.size
    pvalue = binomial_two_sided(k, ts.size, null_share).pvalue
    return share, pvalue


# -- SF4: maker concentration ---------------------------------------------------

def sf4_maker_hhi(trades: pd.DataFrame) -> float:
    """Volume-weighted Herfindahl of maker-address share; 1/HHI = makers."""
    if trades.empty:
        raise NoTrades("no trades for maker HHI")
    vol = trades.groupby("maker")["size_usdc"].sum()
    total = float(vol.sum())
    if total <= 0.0:
        raise NoTrades("zero traded volume")
    shares = vol.to_numpy(dtype=float) / total
    return float(np.sum(shares**2))


# -- SF5: keyword classification ------------------------------------------------

def load_lexicon() -> dict:
    text = resources.files("lobchain").joinpath("data/category_lexicon.json").read_text()
    return json.loads(text)


def sf5_categorize(question: str, lexicon: dict | None = None) -> str:
    """First lexicon category with a keyword hit; Other when none match."""
    lex = lexicon if lexicon is not None else load_lexicon()
    text = (question or "").lower()
    for cat in lex["categories"]:
        if any(kw in text for kw in cat["keywords"]):
            return cat["name"]
    return FALLBACK_CATEGORY


def merge_small_categories(summaries: pd.DataFrame,
                           min_markets: int = CATEGORY_MIN_MARKETS) -> pd.DataFrame:
    """Buckets with fewer than min_markets panel markets merge into Other."""
    counts = summaries["category"].value_counts()
    small = set(counts[counts < min_markets].index) - {FALLBACK_CATEGORY}
    out = summaries.copy()
    out.loc[out["category"].isin(small), "category"] = FALLBACK_CATEGORY
    return out


def sf5_category_table(summaries: pd.DataFrame, measure: str) -> pd.DataFrame:
    """Per-category market counts and measure quantiles (post-merge)."""
    merged = merge_small_categories(summaries)
    rows = []
    for cat, grp in merged.groupby("category", sort=True):
        vals = grp[measure].to_numpy(dtype=float)
        vals = vals[np.isfinite(vals)]
        rows.append({
            "category": cat,
            "markets": int(len(grp)),
            "median": percentile(vals, 0.5) if vals.size else np.nan,
            "p25": percentile(vals, 0.25) if vals.size else np.nan,
            "p75": percentile(vals, 0.75) if vals.size else np.nan,
        })
    return pd.DataFrame(rows)


# -- SF6: archive-ingestion latency ----------------------------------------------

def sf6_latency(ts_received_ms, ts_created_ms) -> dict:
    """Nearest-rank p50/p90/p99 of per-event collector delay (ms).

    Negative deltas (clock skew) are counted and excluded.
    """
    recv = np.asarray(ts_received_ms, dtype=float)
    crea = np.asarray(ts_created_ms, dtype=float)
    if recv.size == 0:
        raise NoEvents("no events for latency percentiles")
    delta = crea - recv
    neg = delta < 0.0
    usable = delta[~neg]
    if usable.size == 0:
        raise NoEvents("all latency deltas negative")
    return {
        "p50": percentile(usable, 0.50),
        "p90": percentile(usable, 0.90),
        "p99": percentile(usable, 0.99),
        "n_negative_excluded": int(neg.sum()),
    }


# -- SF7: wash share (lower bound) -------------------------------------------------

def wash_flags(trades: pd.DataFrame, buffer_blocks: int = WASH_BLOCK_BUFFER) -> np.ndarray:
    """Wash-suspect flags: maker==taker, or a flipped (maker, taker) pair on
    the same market within the block buffer; both legs of a pair flag.

    Direct and one-step roundtrip patterns only — a lower bound by design;
    multi-wallet cycles stay unflagged.
    """
    n = len(trades)
    flags = np.zeros(n, dtype=bool)
    makers = trades["maker"].to_numpy()
    takers = trades["taker"].to_numpy()
    blocks = trades["block_number"].to_numpy(dtype=np.int64)
    markets = trades["market_id"].to_numpy()

    flags |= makers == takers

    by_pair: dict[tuple, list[tuple[int, int]]] = defaultdict(list)
    for i in range(n):
        by_pair[(markets[i], makers[i], takers[i])].append((int(blocks[i]), i))
    for key in by_pair:
        by_pair[key].sort()
    for i in range(n):
        flipped = (markets[i], takers[i], makers[i])
        partners = by_pair.get(flipped)
        if not partners:
            continue
        b = int(blocks[i])
        lo = bisect.bisect_left(partners, (b - buffer_blocks, -1))
        hi = bisect.bisect_right(partners, (b + buffer_blocks, n))
        for _, j in partners[lo:hi]:
            flags[i] = True
            flags[j] = True
    return flags


def sf7_wash_share(trades: pd.DataFrame,
                   buffer_blocks: int = WASH_BLOCK_BUFFER) -> dict:
    """Wash-suspect share of USDC volume (and of trade count)."""
    if trades.empty:
        raise NoTrades("no trades for wash share")
    flags = wash_flags(trades, buffer_blocks)
    vol = trades["size_usdc"].to_numpy(dtype=float)
    total = float(vol.sum())
    if total <= 0.0:
        raise NoTrades("zero traded volume")
    return {
        "share_volume": float(vol[flags].sum() / total),
        "share_count": float(flags.mean()),
        "n_flagged": int(flags.sum()),
        "n_trades": int(len(trades)),
    }


# -- SF8: depth decay near resolution -------------------------------------------------

SF8_SPECS = ("bivariate", "category_fe", "category_fe_logvol")


def sf8_depth_decay(summaries: pd.DataFrame, spec: str = "bivariate") -> dict:
    """OLS of log mean L10 depth on log seconds-to-close, HC3 SE on the slope."""
    if spec not in SF8_SPECS:
        raise ValueError(f"unknown spec {spec!r}")
    frame = summaries[
        np.isfinite(summaries["mean_depth_l10"]) & (summaries["mean_depth_l10"] > 0)
        & np.isfinite(summaries["seconds_to_close"]) & (summaries["seconds_to_close"] > 0)
    ].copy()
    if spec == "category_fe_logvol":
        frame = frame[np.isfinite(frame["usdc_volume"]) & (frame["usdc_volume"] > 0)]
    n = len(frame)
    y = np.log(frame["mean_depth_l10"].to_numpy(dtype=float))
    log_ttc = np.log(frame["seconds_to_close"].to_numpy(dtype=float))
    cols = [np.ones(n), log_ttc]
    if spec in ("category_fe", "category_fe_logvol"):
        merged = merge_small_categories(frame)
        cats = sorted(merged["category"].unique())
        for cat in cats[1:]:  # first category absorbed by the intercept
            cols.append((merged["category"] == cat).to_numpy(dtype=float))
    if spec == "category_fe_logvol":
        cols.append(np.log(frame["usdc_volume"].to_numpy(dtype=float)))
    x = np.column_stack(cols)
    fit = ols_hc3(x, y)
    return {
        "spec": spec,
        "n": n,
        "slope_log_ttc": float(fit.coefficients[1]),
        "hc3_se": float(fit.hc3_standard_errors[1]),
        "r_squared": fit.r_squared,
    }
