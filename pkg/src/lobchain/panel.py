"""Deterministic stratified market panel.

Two strata: the top markets by on-chain USDC volume (both outcome tokens
summed), and a uniform without-replacement sample from markets clearing a
minimum trade count, drawn with a committed seed. The build is byte-
reproducible: a fixed PCG64 stream, lexicographic tie-breaks, and a SHA-256
content hash emitted for pre-registration.
"""

from __future__ import annotations

from dataclasses import dataclass
from hashlib import sha256
from typing import Callable, Mapping

import numpy as np
import pandas as pd

from .errors import InsufficientEligible
from .metadata import MarketMeta
from .stats import seeded_rng

PANEL_RNG_ALGORITHM = "numpy-PCG64"

PANEL_COLUMNS = [
    "market_id", "stratum", "usdc_volume", "n_trades",
    "question", "end_date_iso", "closed", "yes_token_id", "no_token_id",
]


@dataclass(frozen=True)
class PanelSpec:
    top_n: int = 100
    random_n: int = 500
    min_trades: int = 100
    seed: int = 20260424
    window: tuple[str, str] | None = None


@dataclass
class PanelBuild:
    frame: pd.DataFrame
    content_hash: str
    n_metadata_misses: int


def panel_content_hash(frame: pd.DataFrame) -> str:
    """SHA-256 over a canonical CSV serialization (platform independent)."""
    canon = frame.sort_values(["stratum", "market_id"]).reset_index(drop=True)
    text = canon.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    return sha256(text.encode()).hexdigest()


def build_panel(volumes: Mapping[str, float], trade_counts: Mapping[str, int],
                resolver: Callable[[str], MarketMeta | None],
                spec: PanelSpec = PanelSpec()) -> PanelBuild:
    """Select top_n + random_n markets and attach metadata.

    Top stratum ranks by volume with lexicographic market-id tie-breaks.
    The random stratum samples uniformly without replacement from eligible
    markets (>= min_trades on-chain trades, metadata resolvable) excluding
    the top stratum. Unresolvable markets are excluded and tallied.
    """
    misses = 0
    resolved: dict[str, MarketMeta] = {}
    for market_id in sorted(volumes):
        meta = resolver(market_id)
        if meta is None:
            misses += 1
            continue
        resolved[market_id] = meta

    ranked = sorted(resolved, key=lambda m: (-float(volumes[m]), m))
    top = ranked[: spec.top_n]
    top_set = set(top)

    eligible = sorted(
        m for m in resolved
        if m not in top_set and int(trade_counts.get(m, 0)) >= spec.min_trades
    )
    if len(eligible) < spec.random_n:
        raise InsufficientEligible(
            f"{len(eligible)} eligible markets for a random stratum of {spec.random_n}")
    rng = seeded_rng(spec.seed)
    random_pick = sorted(rng.choice(np.array(eligible, dtype=object),
                                    size=spec.random_n, replace=False).tolist())

    rows = []
    for stratum, members in (("top", top), ("random", random_pick)):
        for market_id in members:
            meta = resolved[market_id]
            rows.append({
                "market_id": market_id,
                "stratum": stratum,
                "usdc_volume": float(volumes[market_id]),
                "n_trades": int(trade_counts.get(market_id, 0)),
                "question": meta.question,
                "end_date_iso": meta.end_date_iso,
                "closed": bool(meta.closed),
                "yes_token_id": meta.yes_token_id,
                "no_token_id": meta.no_token_id,
            })
    frame = pd.DataFrame(rows, columns=PANEL_COLUMNS)
    frame = frame.sort_values(["stratum", "market_id"]).reset_index(drop=True)
    return PanelBuild(frame=frame, content_hash=panel_content_hash(frame),
                      n_metadata_misses=misses)


def volumes_from_trades(trades: pd.DataFrame) -> tuple[dict[str, float], dict[str, int]]:
    """Per-market USDC volume and trade count across both outcome tokens."""
    grouped = trades.groupby("market_id")["size_usdc"]
    return grouped.sum().to_dict(), grouped.size().to_dict()
