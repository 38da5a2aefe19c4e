"""Feed-vs-chain calibration: bucket matching, sign agreement, flip rates.

Inferred and on-chain trades are joined in (5-second slot, exact tick
price) buckets per market. A bucket matches when both sources traded in it;
its net sign is the sign of the signed USDC sum. Agreement per market cell
is the share of matched buckets whose non-zero net signs coincide;
exact-cancellation buckets are neither agreement nor disagreement and
leave the denominator. Cells need at least ten matched buckets to enter
panel statistics. Uncertainty: market-clustered percentile bootstrap for
means, Wilson score intervals for flip proportions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .errors import DegenerateClusters, EmptyComparable, NoValidCells
from .stats import percentile, seeded_rng, wilson_interval

BUCKET_SECONDS = 5.0
MIN_MATCHED_BUCKETS = 10
DEFAULT_BOOTSTRAP = 1_000

MATCHED_COLUMNS = [
    "market_id", "bucket_start", "price_milli",
    "inferred_net_sign", "onchain_net_sign",
    "inferred_usdc", "onchain_usdc", "n_inferred", "n_onchain",
]

CELL_COLUMNS = ["market_id", "window_id", "matched_buckets", "valid_buckets", "agreement"]


def _bucket_nets(trades: pd.DataFrame) -> pd.DataFrame:
    slot = np.floor(trades["ts"].to_numpy(dtype=float) / BUCKET_SECONDS) * BUCKET_SECONDS
    work = pd.DataFrame({
        "market_id": trades["market_id"].to_numpy(),
        "bucket_start": slot,
        "price_milli": trades["price_milli"].to_numpy(),
        "net": trades["sign"].to_numpy(dtype=float) * trades["size_usdc"].to_numpy(dtype=float),
        "usdc": trades["size_usdc"].to_numpy(dtype=float),
    })
    g = work.groupby(["market_id", "bucket_start", "price_milli"], sort=True)
    out = g.agg(net=("net", "sum"), usdc=("usdc", "sum"), n=("net", "size"))
    return out.reset_index()


def bucket_match(inferred: pd.DataFrame, onchain: pd.DataFrame,
                 window: tuple[float, float] | None = None) -> pd.DataFrame:
    """Inner-join both sources on (market, 5 s slot, exact tick price)."""
    if window is not None:
        lo, hi = window
        inferred = inferred[(inferred["ts"] >= lo) & (inferred["ts"] < hi)]
        onchain = onchain[(onchain["ts"] >= lo) & (onchain["ts"] < hi)]
    if inferred.empty or onchain.empty:
        return pd.DataFrame(columns=MATCHED_COLUMNS)
    a = _bucket_nets(inferred)
    b = _bucket_nets(onchain)
    merged = a.merge(b, on=["market_id", "bucket_start", "price_milli"],
                     suffixes=("_inf", "_on"))
    return pd.DataFrame({
        "market_id": merged["market_id"],
        "bucket_start": merged["bucket_start"],
        "price_milli": merged["price_milli"],
        "inferred_net_sign": np.sign(merged["net_inf"]).astype(np.int64),
        "onchain_net_sign": np.sign(merged["net_on"]).astype(np.int64),
        "inferred_usdc": merged["usdc_inf"],
        "onchain_usdc": merged["usdc_on"],
        "n_inferred": merged["n_inf"].astype(np.int64),
        "n_onchain": merged["n_on"].astype(np.int64),
    })[MATCHED_COLUMNS]


def agreement_cells(matched: pd.DataFrame, window_id: str = "w0",
                    min_buckets: int = MIN_MATCHED_BUCKETS) -> pd.DataFrame:
    """Per-market agreement cells, gated on matched-bucket count."""
    rows = []
    for market_id, grp in matched.groupby("market_id", sort=True):
        a = grp["inferred_net_sign"].to_numpy()
        b = grp["onchain_net_sign"].to_numpy()
        valid = (a != 0) & (b != 0)
        n_valid = int(valid.sum())
        agreement = float((a[valid] == b[valid]).mean()) if n_valid else np.nan
        rows.append({
            "market_id": market_id,
            "window_id": window_id,
            "matched_buckets": int(len(grp)),
            "valid_buckets": n_valid,
            "agreement": agreement,
        })
    cells = pd.DataFrame(rows, columns=CELL_COLUMNS)
    if cells.empty:
        return cells
    return cells[cells["matched_buckets"] >= min_buckets].reset_index(drop=True)


@dataclass
class AgreementStats:
    mean: float
    median: float
    iqr: tuple[float, float]
    n_cells: int
    n_buckets: int


def sign_agreement(cells: pd.DataFrame,
                   weights: str = "unweighted") -> AgreementStats:
    """Panel aggregation of cell agreement.

    weights="buckets" weights the mean by matched-bucket count (the
    volume-weighted headline); median and IQR stay unweighted.
    """
    usable = cells.dropna(subset=["agreement"])
    if usable.empty:
        raise NoValidCells("no cells with computable agreement")
    vals = usable["agreement"].to_numpy(dtype=float)
    if weights == "buckets":
        w = usable["matched_buckets"].to_numpy(dtype=float)
        mean = float(np.average(vals, weights=w))
    elif weights == "unweighted":
        mean = float(vals.mean())
    else:
        raise ValueError(f"unknown weighting {weights!r}")
    return AgreementStats(
        mean=mean,
        median=percentile(vals, 0.5),
        iqr=(percentile(vals, 0.25), percentile(vals, 0.75)),
        n_cells=int(len(usable)),
        n_buckets=int(usable["matched_buckets"].sum()),
    )


def clustered_bootstrap_ci(values: Sequence[float], clusters: Sequence,
                           b: int = DEFAULT_BOOTSTRAP, seed: int = 0,
                           stat: Callable[[np.ndarray, np.ndarray], float] | None = None,
                           weights: Sequence[float] | None = None,
                           conf: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap CI, resampling whole clusters with replacement.

    Resample i draws its RNG from seeded_rng(seed, i), so the result is
    independent of execution order. stat(values, weights) defaults to the
    (weighted) mean.
    """
    values = np.asarray(values, dtype=float)
    cl = np.asarray(clusters)
    w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    if values.shape != cl.shape or values.shape != w.shape:
        raise ValueError("values, clusters, weights must align")
    unique = np.unique(cl)
    if unique.size < 2:
        raise DegenerateClusters(f"{unique.size} cluster(s), need >= 2")
    if b < 200:
        raise ValueError("need at least 200 resamples")
    if stat is None:
        def stat(v, ww):
            return float(np.average(v, weights=ww))
    groups = {c: (values[cl == c], w[cl == c]) for c in unique}
    draws = np.empty(b)
    for i in range(b):
        rng = seeded_rng(seed, i)
        chosen = rng.choice(unique, size=unique.size, replace=True)
        v = np.concatenate([groups[c][0] for c in chosen])
        ww = np.concatenate([groups[c][1] for c in chosen])
        draws[i] = stat(v, ww)
    alpha = 1.0 - conf
    return (percentile(draws, alpha / 2.0), percentile(draws, 1.0 - alpha / 2.0))


@dataclass
class FlipResult:
    rate: float
    n_flips: int
    n_comparable: int
    wilson: tuple[float, float]


def sign_flip_rate(a: pd.DataFrame, b: pd.DataFrame, measure: str) -> FlipResult:
    """Share of markets where a measure has strictly opposite signs.

    Compares markets present in both sets with finite values; an exact zero
    on either side is not a flip but stays in the denominator.
    """
    joined = a.set_index("market_id")[[measure]].join(
        b.set_index("market_id")[[measure]], how="inner", lsuffix="_a", rsuffix="_b")
    va = joined[f"{measure}_a"].to_numpy(dtype=float)
    vb = joined[f"{measure}_b"].to_numpy(dtype=float)
    ok = np.isfinite(va) & np.isfinite(vb)
    n = int(ok.sum())
    if n == 0:
        raise EmptyComparable(f"no market has {measure} in both sources")
    flips = int(((va[ok] * vb[ok]) < 0.0).sum())
    return FlipResult(
        rate=flips / n,
        n_flips=flips,
        n_comparable=n,
        wilson=wilson_interval(flips, n),
    )


def volume_weighted_flip(a: pd.DataFrame, b: pd.DataFrame, measure: str,
                         weights: pd.Series, b_resamples: int = DEFAULT_BOOTSTRAP,
                         seed: int = 0) -> tuple[float, tuple[float, float]]:
    """Flip rate weighted by per-market on-chain USDC volume, bootstrap CI."""
    joined = a.set_index("market_id")[[measure]].join(
        b.set_index("market_id")[[measure]], how="inner", lsuffix="_a", rsuffix="_b")
    joined = joined.join(weights.rename("w"), how="inner")
    va = joined[f"{measure}_a"].to_numpy(dtype=float)
    vb = joined[f"{measure}_b"].to_numpy(dtype=float)
    w = joined["w"].to_numpy(dtype=float)
    ok = np.isfinite(va) & np.isfinite(vb) & (w > 0)
    if not ok.any():
        raise EmptyComparable(f"no weighted market has {measure} in both sources")
    flips = ((va[ok] * vb[ok]) < 0.0).astype(float)
    w = w[ok]
    markets = joined.index.to_numpy()[ok]
    rate = float(np.average(flips, weights=w))
    if np.unique(markets).size < 2:
        return rate, (rate, rate)
    ci = clustered_bootstrap_ci(flips, markets, b=b_resamples, seed=seed, weights=w)
    return rate, ci
