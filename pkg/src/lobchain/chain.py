"""Decoding and normalization of exchange fill events.

The exchange contract emits one OrderFilled log per fill with three indexed
topics (order hash, maker, taker) and five 32-byte data words (maker asset
id, taker asset id, maker amount, taker amount, fee). Asset id 0 marks the
USDC side; exactly one side must be USDC for the fill to carry an aggressor
sign. Asset ids are 256-bit and must never be narrowed to machine ints.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
import pandas as pd

from .errors import (
    MalformedData,
    NegativeOffset,
    PriceOutOfRange,
    SplitFill,
    TopicMismatch,
    ZeroAmount,
)

ORDER_FILLED_TOPIC = "0xd0a08e8c493f9c94f29311604c9de1b4e8c8d4c06bd0c789af57f2d65bfec0f6"
EXCHANGE_ADDRESS = "0x4bfb41d5b3570defd03c39a9a4d8de6bd8b8982e"

USDC_SCALE = 1e-6   # USDC base units per dollar
TOKEN_SCALE = 1e-6  # conditional-token base units per token

DEFAULT_SECONDS_PER_BLOCK = 2.0

FILL_COLUMNS = [
    "tx_hash", "log_index", "order_hash", "maker", "taker",
    "maker_asset_id", "taker_asset_id", "maker_amount", "taker_amount",
    "fee", "block_number", "block_ts",
]


@dataclass(frozen=True)
class OnChainFill:
    tx_hash: str
    log_index: int
    order_hash: str
    maker: str
    taker: str
    maker_asset_id: int
    taker_asset_id: int
    maker_amount: int
    taker_amount: int
    fee: int
    block_number: int
    block_ts: float | None = None

    def with_block_ts(self, ts: float) -> "OnChainFill":
        return replace(self, block_ts=ts)


def _hex_to_int(value) -> int:
    if isinstance(value, int):
        return value
    return int(str(value), 16)


def _word(data: bytes, i: int) -> int:
    return int.from_bytes(data[32 * i: 32 * (i + 1)], "big")


def decode_order_filled(log: dict) -> OnChainFill:
    """Decode one eth_getLogs entry into an OnChainFill."""
    topics = log.get("topics") or []
    if not topics or str(topics[0]).lower() != ORDER_FILLED_TOPIC:
        raise TopicMismatch(f"topic0 {topics[0] if topics else None!r}")
    if len(topics) != 4:
        raise MalformedData(f"expected 4 topics, got {len(topics)}")
    raw = str(log.get("data", "0x"))
    hexdata = raw[2:] if raw.startswith("0x") else raw
    try:
        data = bytes.fromhex(hexdata)
    except ValueError as exc:
        raise MalformedData("data is not hex") from exc
    if len(data) != 160:
        raise MalformedData(f"data payload is {len(data)} bytes, expected 160")
    return OnChainFill(
        tx_hash=str(log["transactionHash"]).lower(),
        log_index=_hex_to_int(log["logIndex"]),
        order_hash=str(topics[1]).lower(),
        maker="0x" + str(topics[2])[-40:].lower(),
        taker="0x" + str(topics[3])[-40:].lower(),
        maker_asset_id=_word(data, 0),
        taker_asset_id=_word(data, 1),
        maker_amount=_word(data, 2),
        taker_amount=_word(data, 3),
        fee=_word(data, 4),
        block_number=_hex_to_int(log["blockNumber"]),
    )


def encode_order_filled(fill: OnChainFill) -> dict:
    """Inverse of decode_order_filled; used by tests and the mock RPC."""
    words = b"".join(
        v.to_bytes(32, "big")
        for v in (fill.maker_asset_id, fill.taker_asset_id,
                  fill.maker_amount, fill.taker_amount, fill.fee)
    )
    return {
        "address": EXCHANGE_ADDRESS,
        "topics": [
            ORDER_FILLED_TOPIC,
            fill.order_hash,
            "0x" + fill.maker[2:].rjust(64, "0"),
            "0x" + fill.taker[2:].rjust(64, "0"),
        ],
        "data": "0x" + words.hex(),
        "transactionHash": fill.tx_hash,
        "logIndex": hex(fill.log_index),
        "blockNumber": hex(fill.block_number),
    }


def aggressor_sign(fill: OnChainFill) -> int:
    """+1 when the taker posted USDC (buyer), -1 when the maker did."""
    maker_usdc = fill.maker_asset_id == 0
    taker_usdc = fill.taker_asset_id == 0
    if maker_usdc == taker_usdc:
        raise SplitFill(
            f"fill {fill.tx_hash}:{fill.log_index} has no single USDC side")
    return 1 if taker_usdc else -1


def fill_price_and_size(fill: OnChainFill) -> tuple[float, float]:
    """(price in (0,1), size in USDC) of an admissible fill."""
    sign = aggressor_sign(fill)
    if sign == 1:
        usdc, tokens = fill.taker_amount, fill.maker_amount
    else:
        usdc, tokens = fill.maker_amount, fill.taker_amount
    if usdc <= 0 or tokens <= 0:
        raise ZeroAmount(f"fill {fill.tx_hash}:{fill.log_index} has a zero amount")
    price = usdc / tokens  # symmetric 1e-6 scales cancel
    if not 0.0 < price < 1.0:
        raise PriceOutOfRange(f"price {price} outside (0, 1)")
    return price, usdc * USDC_SCALE


def interpolate_block_ts(block_number: int, anchor: tuple[int, float],
                         slope: float = DEFAULT_SECONDS_PER_BLOCK) -> float:
    """Wall-clock seconds for a block, linear from a single anchor."""
    anchor_block, anchor_ts = anchor
    if block_number < anchor_block:
        raise NegativeOffset(f"block {block_number} before anchor {anchor_block}")
    return anchor_ts + slope * (block_number - anchor_block)


def estimate_slope(anchor_a: tuple[int, float], anchor_b: tuple[int, float]) -> float:
    """Seconds per block between two (block, ts) anchors."""
    (b0, t0), (b1, t1) = anchor_a, anchor_b
    if b1 == b0:
        raise ValueError("anchors share a block number")
    return (t1 - t0) / (b1 - b0)


def fills_to_frame(fills: Iterable[OnChainFill]) -> pd.DataFrame:
    """Columnar fill table. Asset ids are decimal strings (256-bit safe)."""
    rows = [
        (f.tx_hash, f.log_index, f.order_hash, f.maker, f.taker,
         str(f.maker_asset_id), str(f.taker_asset_id),
         f.maker_amount, f.taker_amount, f.fee, f.block_number,
         np.nan if f.block_ts is None else f.block_ts)
        for f in fills
    ]
    frame = pd.DataFrame(rows, columns=FILL_COLUMNS)
    if frame.empty:
        return empty_fill_frame()
    frame["log_index"] = frame["log_index"].astype(np.int64)
    frame["maker_amount"] = frame["maker_amount"].astype(np.int64)
    frame["taker_amount"] = frame["taker_amount"].astype(np.int64)
    frame["fee"] = frame["fee"].astype(np.int64)
    frame["block_number"] = frame["block_number"].astype(np.int64)
    frame["block_ts"] = frame["block_ts"].astype(np.float64)
    return frame


def empty_fill_frame() -> pd.DataFrame:
    return pd.DataFrame({
        "tx_hash": pd.Series(dtype=object),
        "log_index": pd.Series(dtype=np.int64),
        "order_hash": pd.Series(dtype=object),
        "maker": pd.Series(dtype=object),
        "taker": pd.Series(dtype=object),
        "maker_asset_id": pd.Series(dtype=object),
        "taker_asset_id": pd.Series(dtype=object),
        "maker_amount": pd.Series(dtype=np.int64),
        "taker_amount": pd.Series(dtype=np.int64),
        "fee": pd.Series(dtype=np.int64),
        "block_number": pd.Series(dtype=np.int64),
        "block_ts": pd.Series(dtype=np.float64),
    })


def synthetic_hash(*parts) -> str:
    """Deterministic 32-byte hex id for generated fixtures."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).hexdigest()
    return "0x" + digest
