"""Feed-only trade inference.

LOOSE: every delta that reduces the resting size at a tracked level is a
trade of the decrement at that price; ask-side decrements are buys (+1),
bid-side decrements sells (-1). The feed's change_side locates the touched
side only; it is never a sign source for measures.

STRICT: a decrement counts only when (a) it hits the current best price of
its side and (b) no cancel-replace signature explains it: no same-side
insertion or increase of equal size at a different price within the
lookback window of surrounding events. The feed never defines a strict
rule; this concretization is this artifact's and is flagged in the source
tag of its output. Cost is O(n * lookback) by construction.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from .errors import DeltaBeforeSnapshot
from .feed import PRICE_CHANGE, BookEvent, OrderBook
from .trades import SOURCE_LOOSE, SOURCE_STRICT

DEFAULT_LOOKBACK = 256

INFERRED_COLUMNS = [
    "market_id", "token_id", "ts", "price", "price_milli", "size_usdc",
    "sign", "maker", "taker", "block_number", "source",
    "event_index", "level_side",
]


@dataclass(frozen=True)
class _DeltaRecord:
    index: int
    side: str
    price_milli: int
    old_size: float
    new_size: float
    best_before: int | None
    ts_ms: int

    @property
    def decrement(self) -> float:
        return self.old_size - self.new_size


def _delta_records(events: Iterable[BookEvent]) -> tuple[list[_DeltaRecord], str, str]:
    """Replay a single-market stream into normalized delta records."""
    book: OrderBook | None = None
    records: list[_DeltaRecord] = []
    market_id = token_id = ""
    for i, ev in enumerate(events):
        if book is None:
            book = OrderBook(ev.market_id, ev.token_id)
            market_id, token_id = ev.market_id, ev.token_id
        if ev.kind == PRICE_CHANGE and book.snapshot_seen:
            side, price, new_size = ev.delta()
            ladder = book.bids if side == "bid" else book.asks
            old_size = ladder.get(price, 0.0)
            best = book.best_bid_milli if side == "bid" else book.best_ask_milli
            records.append(_DeltaRecord(i, side, price, old_size, new_size, best,
                                        ev.ts_received))
        try:
            book.apply(ev)
        except DeltaBeforeSnapshot:
            continue
    return records, market_id, token_id


def _trade_row(rec: _DeltaRecord, market_id: str, token_id: str, source: str) -> dict:
    price = rec.price_milli / 1000.0
    qty = rec.decrement
    return {
        "market_id": market_id,
        "token_id": token_id,
        "ts": rec.ts_ms / 1000.0,
        "price": price,
        "price_milli": rec.price_milli,
        "size_usdc": qty * price,
        "sign": 1 if rec.side == "ask" else -1,
        "maker": None,
        "taker": None,
        "block_number": -1,
        "source": source,
        "event_index": rec.index,
        "level_side": rec.side,
    }


def _to_frame(rows: list[dict]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=INFERRED_COLUMNS)
    if frame.empty:
        frame["ts"] = frame["ts"].astype(np.float64)
        frame["sign"] = frame["sign"].astype(np.int64)
        frame["price_milli"] = frame["price_milli"].astype(np.int64)
        frame["size_usdc"] = frame["size_usdc"].astype(np.float64)
    return frame


def infer_loose(events: Iterable[BookEvent]) -> pd.DataFrame:
    """Every resting-size decrement counts."""
    records, market_id, token_id = _delta_records(events)
    rows = [
        _trade_row(r, market_id, token_id, SOURCE_LOOSE)
        for r in records
        if r.old_size > 0.0 and r.new_size < r.old_size
    ]
    return _to_frame(rows)


def infer_strict(events: Iterable[BookEvent],
                 lookback: int = DEFAULT_LOOKBACK) -> pd.DataFrame:
    """Touch-only decrements with cancel-replace suppression.

    The repost half of a cancel-replace can land on either side of the
    cancel in the stream, so the window is scanned in both directions.
    """
    records, market_id, token_id = _delta_records(events)
    decrements = [r for r in records if r.old_size > 0.0 and r.new_size < r.old_size]
    # same-side size increases (insert or grow), the repost signature
    increases = [r for r in records if r.new_size > r.old_size]
    inc_indices = [r.index for r in increases]

    rows = []
    for rec in decrements:
        if rec.best_before is None or rec.price_milli != rec.best_before:
            continue
        dec = rec.decrement
        lo = bisect.bisect_left(inc_indices, rec.index - lookback)
        hi = bisect.bisect_right(inc_indices, rec.index + lookback)
        suppressed = any(
            inc.side == rec.side and inc.price_milli != rec.price_milli
            and inc.new_size - inc.old_size == dec
            for inc in increases[lo:hi]
        )
        if not suppressed:
            rows.append(_trade_row(rec, market_id, token_id, SOURCE_STRICT))
    return _to_frame(rows)


def count_decrements(events: Iterable[BookEvent]) -> int:
    """One-pass oracle: number of size-decrement deltas in a stream."""
    records, _, _ = _delta_records(events)
    return sum(1 for r in records if r.old_size > 0.0 and r.new_size < r.old_size)
