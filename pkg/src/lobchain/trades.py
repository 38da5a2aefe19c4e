"""Unified signed-trade records.

A SignedTrade row is the common currency of the measure, calibration, and
stylized-fact paths: (market, token, time, price, USDC size, aggressor sign,
counterparties, source). Sources: on-chain fills, or feed inference under
the loose/strict rules. The columnar converter applies the same admission
rules as the scalar chain ops and tallies every dropped fill.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

SOURCE_ONCHAIN = "onchain"
SOURCE_LOOSE = "inferred_loose"
SOURCE_STRICT = "inferred_strict"

TRADE_COLUMNS = [
    "market_id", "token_id", "ts", "price", "price_milli", "size_usdc",
    "sign", "maker", "taker", "block_number", "source",
]


@dataclass
class DropTally:
    split_fills: int = 0
    zero_amount: int = 0
    price_out_of_range: int = 0
    unmapped_token: int = 0

    @property
    def total(self) -> int:
        return (self.split_fills + self.zero_amount
                + self.price_out_of_range + self.unmapped_token)


def empty_trade_frame() -> pd.DataFrame:
    return pd.DataFrame({
        "market_id": pd.Series(dtype=object),
        "token_id": pd.Series(dtype=object),
        "ts": pd.Series(dtype=np.float64),
        "price": pd.Series(dtype=np.float64),
        "price_milli": pd.Series(dtype=np.int64),
        "size_usdc": pd.Series(dtype=np.float64),
        "sign": pd.Series(dtype=np.int64),
        "maker": pd.Series(dtype=object),
        "taker": pd.Series(dtype=object),
        "block_number": pd.Series(dtype=np.int64),
        "source": pd.Series(dtype=object),
    })


def trades_from_fills(fills: pd.DataFrame,
                      token_map: Mapping[str, str],
                      ) -> tuple[pd.DataFrame, DropTally]:
    """Convert a fill table into signed trades, dropping inadmissible rows.

    Vectorized equivalent of aggressor_sign + fill_price_and_size per row;
    the scalar ops remain the reference and the two are property-tested
    against each other. token_map maps token id (decimal string) to the
    market's condition id.
    """
    tally = DropTally()
    if fills.empty:
        return empty_trade_frame(), tally

    maker_usdc = fills["maker_asset_id"].to_numpy() == "0"
    taker_usdc = fills["taker_asset_id"].to_numpy() == "0"
    admissible = maker_usdc ^ taker_usdc
    tally.split_fills = int((~admissible).sum())

    sub = fills.loc[admissible]
    maker_usdc = maker_usdc[admissible]
    sign = np.where(maker_usdc, -1, 1).astype(np.int64)

    maker_amt = sub["maker_amount"].to_numpy(dtype=np.float64)
    taker_amt = sub["taker_amount"].to_numpy(dtype=np.float64)
    usdc = np.where(maker_usdc, maker_amt, taker_amt)
    tokens = np.where(maker_usdc, taker_amt, maker_amt)

    nonzero = (usdc > 0) & (tokens > 0)
    tally.zero_amount = int((~nonzero).sum())

    with np.errstate(divide="ignore", invalid="ignore"):
        price = np.where(nonzero, usdc / np.where(tokens > 0, tokens, 1.0), np.nan)
    in_range = nonzero & (price > 0.0) & (price < 1.0)
    tally.price_out_of_range = int((nonzero & ~in_range).sum())

    token_id = np.where(maker_usdc,
                        sub["taker_asset_id"].to_numpy(),
                        sub["maker_asset_id"].to_numpy())
    market_id = np.array([token_map.get(t, "") for t in token_id], dtype=object)
    mapped = market_id != ""
    tally.unmapped_token = int((in_range & ~mapped).sum())

    keep = in_range & mapped
    frame = pd.DataFrame({
        "market_id": market_id[keep],
        "token_id": token_id[keep],
        "ts": sub["block_ts"].to_numpy(dtype=np.float64)[keep],
        "price": price[keep],
        "price_milli": np.round(price[keep] * 1000.0).astype(np.int64),
        "size_usdc": usdc[keep] * 1e-6,
        "sign": sign[keep],
        "maker": sub["maker"].to_numpy()[keep],
        "taker": sub["taker"].to_numpy()[keep],
        "block_number": sub["block_number"].to_numpy(dtype=np.int64)[keep],
        "source": SOURCE_ONCHAIN,
    })
    return frame[TRADE_COLUMNS], tally


def shuffle_signs(trades: pd.DataFrame, rng: np.random.Generator) -> pd.DataFrame:
    """Replace signs with iid fair coin flips (chance-baseline construction)."""
    out = trades.copy()
    out["sign"] = rng.choice(np.array([-1, 1], dtype=np.int64), size=len(out))
    return out
