"""Feed parsing and L2 order-book reconstruction.

The public feed carries two event kinds: full per-side snapshots and
single-level deltas. A delta's size is the new resting quantity at that
price; size zero deletes the level. Prices are stored as integer
thousandths (the venue tick) so ladder keys never suffer float identity
problems and exact-price joins stay exact.

Events are applied in arrival order; timestamps annotate but never reorder.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from .errors import DeltaBeforeSnapshot, EmptySide, MalformedPayload, UnknownEventType

SNAPSHOT = "book_snapshot"
PRICE_CHANGE = "price_change"

_SIDE_ALIASES = {"bid": "bid", "buy": "bid", "ask": "ask", "sell": "ask"}

Level = tuple[int, float]  # (price in thousandths, resting size in tokens)


@dataclass(frozen=True)
class BookEvent:
    """One parsed feed message.

    For a delta exactly one of bids/asks holds a single level; for a
    snapshot a side is None when the message did not carry it (an empty
    tuple means carried-but-empty, which clears that side).
    """

    market_id: str
    token_id: str
    kind: str
    bids: tuple[Level, ...] | None
    asks: tuple[Level, ...] | None
    ts_received: int
    ts_created: int

    @property
    def side(self) -> str | None:
        if self.bids is not None and self.asks is None:
            return "bid"
        if self.asks is not None and self.bids is None:
            return "ask"
        return None

    def delta(self) -> tuple[str, int, float]:
        """(side, price_milli, new_size) of a price_change event."""
        if self.kind != PRICE_CHANGE:
            raise ValueError("delta() on a snapshot event")
        if self.bids is not None:
            return ("bid",) + self.bids[0]
        assert self.asks is not None
        return ("ask",) + self.asks[0]


def parse_price_milli(value) -> int:
    """Parse a probability price onto the integer 0.001 tick grid."""
    try:
        f = float(value)
    except (TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad price {value!r}") from exc
    if not np.isfinite(f) or not 0.0 < f < 1.0:
        raise MalformedPayload(f"price {value!r} outside (0, 1)")
    milli = round(f * 1000.0)
    if abs(f * 1000.0 - milli) > 1e-6 or not 0 < milli < 1000:
        raise MalformedPayload(f"price {value!r} is off the 0.001 tick grid")
    return int(milli)


def _parse_size(value) -> float:
    try:
        f = float(value)
    except (TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad size {value!r}") from exc
    if not np.isfinite(f) or f < 0.0:
        raise MalformedPayload(f"size {value!r} negative or non-finite")
    return f


def _parse_ts(value) -> int:
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad timestamp {value!r}") from exc


def _parse_side(value) -> str:
    side = _SIDE_ALIASES.get(str(value).lower())
    if side is None:
        raise MalformedPayload(f"bad side {value!r}")
    return side


def _parse_ladder(entries, what: str) -> tuple[Level, ...]:
    levels = []
    for entry in entries:
        if isinstance(entry, dict):
            price, size = entry.get("price"), entry.get("size")
        else:
            try:
                price, size = entry[0], entry[1]
            except (TypeError, IndexError) as exc:
                raise MalformedPayload(f"bad {what} level {entry!r}") from exc
        levels.append((parse_price_milli(price), _parse_size(size)))
    prices = [p for p, _ in levels]
    if len(set(prices)) != len(prices):
        raise MalformedPayload(f"duplicate price in {what} snapshot ladder")
    levels.sort(key=lambda lv: lv[0], reverse=(what == "bids"))
    return tuple(levels)


def event_from_mapping(obj: dict) -> BookEvent:
    """Build a BookEvent from an envelope mapping (archive row or ws message)."""
    try:
        market_id = obj["market_id"]
        token_id = obj["token_id"]
        event_type = obj["event_type"]
        ts_received = _parse_ts(obj["timestamp_received"])
        ts_created = _parse_ts(obj["timestamp_created_at"])
        data = obj["data"]
    except KeyError as exc:
        raise MalformedPayload(f"missing envelope field {exc}") from exc
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedPayload("unparseable data payload") from exc
    if not isinstance(data, dict):
        raise MalformedPayload(f"data payload is {type(data).__name__}, not object")

    if event_type == PRICE_CHANGE:
        try:
            price = data["change_price"]
            side = _parse_side(data["change_side"])
            size = data["change_size"]
        except KeyError as exc:
            raise MalformedPayload(f"missing delta field {exc}") from exc
        level = (parse_price_milli(price), _parse_size(size))
        bids = (level,) if side == "bid" else None
        asks = (level,) if side == "ask" else None
        return BookEvent(market_id, token_id, PRICE_CHANGE, bids, asks,
                         ts_received, ts_created)
    if event_type == SNAPSHOT:
        bids = _parse_ladder(data["bids"], "bids") if "bids" in data else None
        asks = _parse_ladder(data["asks"], "asks") if "asks" in data else None
        if bids is None and asks is None:
            # an empty snapshot carries zero levels but must name a side
            side = data.get("side")
            if side is not None:
                if _parse_side(side) == "bid":
                    bids = ()
                else:
                    asks = ()
            else:
                bids, asks = (), ()
        return BookEvent(market_id, token_id, SNAPSHOT, bids, asks,
                         ts_received, ts_created)
    raise UnknownEventType(f"event_type {event_type!r}")


def parse_feed_event(raw: bytes | str) -> BookEvent:
    """Parse one raw feed message (full envelope JSON) into a BookEvent."""
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedPayload("unparseable JSON") from exc
    if not isinstance(obj, dict):
        raise MalformedPayload("feed message is not a JSON object")
    return event_from_mapping(obj)


@dataclass
class OrderBook:
    """Reconstructed per-(market, token) L2 state with incremental bests."""

    market_id: str
    token_id: str
    bids: dict[int, float] = field(default_factory=dict)
    asks: dict[int, float] = field(default_factory=dict)
    last_event_ts: int | None = None
    snapshot_seen: bool = False
    suspect: bool = False
    n_crossed_events: int = 0
    _best_bid: int | None = None
    _best_ask: int | None = None

    # -- queries ------------------------------------------------------------

    @property
    def best_bid_milli(self) -> int | None:
        return self._best_bid

    @property
    def best_ask_milli(self) -> int | None:
        return self._best_ask

    def is_crossed(self) -> bool:
        return (self._best_bid is not None and self._best_ask is not None
                and self._best_bid >= self._best_ask)

    def mid(self) -> float:
        if self._best_bid is None or self._best_ask is None:
            raise EmptySide("mid undefined on a one-sided book")
        return (self._best_bid + self._best_ask) / 2000.0

    def quoted_half_spread_bps(self) -> float:
        """((ask - bid)/2) / mid, in basis points."""
        if self._best_bid is None or self._best_ask is None:
            raise EmptySide("spread undefined on a one-sided book")
        return (self._best_ask - self._best_bid) / (self._best_ask + self._best_bid) * 1e4

    def cumulative_depth(self, side: str, levels: int = 10) -> float:
        if levels < 1:
            raise ValueError("levels must be >= 1")
        ladder = self.bids if side == "bid" else self.asks
        prices = sorted(ladder, reverse=(side == "bid"))[:levels]
        return float(sum(ladder[p] for p in prices))

    def ladder(self, side: str) -> list[Level]:
        book = self.bids if side == "bid" else self.asks
        return sorted(book.items(), key=lambda lv: lv[0], reverse=(side == "bid"))

    def digest(self) -> str:
        """Canonical SHA-256 of the ladder state, for replay-determinism checks."""
        payload = json.dumps(
            {
                "bids": [(p, repr(s)) for p, s in sorted(self.bids.items())],
                "asks": [(p, repr(s)) for p, s in sorted(self.asks.items())],
            },
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    # -- mutation -----------------------------------------------------------

    def apply(self, ev: BookEvent) -> "OrderBook":
        if ev.market_id != self.market_id or ev.token_id != self.token_id:
            raise ValueError("event routed to the wrong book")
        if ev.kind == SNAPSHOT:
            if ev.bids is not None:
                self.bids = {p: s for p, s in ev.bids if s > 0.0}
                self._best_bid = max(self.bids) if self.bids else None
            if ev.asks is not None:
                self.asks = {p: s for p, s in ev.asks if s > 0.0}
                self._best_ask = min(self.asks) if self.asks else None
            self.snapshot_seen = True
        elif ev.kind == PRICE_CHANGE:
            if not self.snapshot_seen:
                raise DeltaBeforeSnapshot(
                    f"delta for {self.market_id} before any snapshot")
            side, price, size = ev.delta()
            book = self.bids if side == "bid" else self.asks
            if size > 0.0:
                book[price] = size
                if side == "bid":
                    self._best_bid = price if self._best_bid is None else max(self._best_bid, price)
                else:
                    self._best_ask = price if self._best_ask is None else min(self._best_ask, price)
            else:
                book.pop(price, None)
                if side == "bid" and price == self._best_bid:
                    self._best_bid = max(book) if book else None
                elif side == "ask" and price == self._best_ask:
                    self._best_ask = min(book) if book else None
        else:
            raise UnknownEventType(ev.kind)
        self.last_event_ts = ev.ts_received
        if self.is_crossed():
            # observational feed: record and keep going, flag the market
            self.n_crossed_events += 1
            self.suspect = True
        return self


@dataclass
class ReplayStats:
    n_applied: int = 0
    n_quarantined: int = 0
    n_crossed: int = 0


def replay(events: Iterable[BookEvent],
           books: dict[tuple[str, str], OrderBook] | None = None,
           ) -> tuple[dict[tuple[str, str], OrderBook], ReplayStats]:
    """Apply a stream across per-market books; quarantine early deltas."""
    books = {} if books is None else books
    st = ReplayStats()
    for ev in events:
        key = (ev.market_id, ev.token_id)
        book = books.get(key)
        if book is None:
            book = books[key] = OrderBook(ev.market_id, ev.token_id)
        before = book.n_crossed_events
        try:
            book.apply(ev)
        except DeltaBeforeSnapshot:
            st.n_quarantined += 1
            continue
        st.n_applied += 1
        st.n_crossed += book.n_crossed_events - before
    return books, st


SAMPLE_COLUMNS = [
    "market_id", "token_id", "ts", "best_bid", "best_ask", "mid",
    "quoted_half_bps", "depth_bid_l1", "depth_bid_l10",
    "depth_ask_l1", "depth_ask_l10", "crossed",
]


def _sample_row(book: OrderBook, ts: float) -> dict:
    crossed = book.is_crossed()
    two_sided = book._best_bid is not None and book._best_ask is not None
    usable = two_sided and not crossed
    return {
        "market_id": book.market_id,
        "token_id": book.token_id,
        "ts": ts,
        "best_bid": book._best_bid / 1000.0 if book._best_bid is not None else np.nan,
        "best_ask": book._best_ask / 1000.0 if book._best_ask is not None else np.nan,
        "mid": book.mid() if usable else np.nan,
        "quoted_half_bps": book.quoted_half_spread_bps() if usable else np.nan,
        "depth_bid_l1": book.cumulative_depth("bid", 1) if usable else np.nan,
        "depth_bid_l10": book.cumulative_depth("bid", 10) if usable else np.nan,
        "depth_ask_l1": book.cumulative_depth("ask", 1) if usable else np.nan,
        "depth_ask_l10": book.cumulative_depth("ask", 10) if usable else np.nan,
        "crossed": crossed,
    }


def sample_books(events: Iterable[BookEvent], step_s: float,
                 end_ts_ms: int | None = None) -> pd.DataFrame:
    """Sample book state on a fixed grid while replaying a stream.

    A sample at grid time g reflects every event with ts_received <= g in
    arrival order. Grids are aligned to the epoch (t = k * step). Crossed or
    one-sided samples carry NaN spread/mid/depth and a crossed flag.
    """
    step_ms = int(round(step_s * 1000.0))
    if step_ms <= 0:
        raise ValueError("step must be positive")
    books: dict[tuple[str, str], OrderBook] = {}
    next_grid: dict[tuple[str, str], int] = {}
    rows: list[dict] = []
    quarantined = 0
    for ev in events:
        key = (ev.market_id, ev.token_id)
        book = books.get(key)
        if book is None:
            book = books[key] = OrderBook(ev.market_id, ev.token_id)
            next_grid[key] = (ev.ts_received // step_ms) * step_ms
        grid = next_grid[key]
        while grid < ev.ts_received:
            rows.append(_sample_row(book, grid / 1000.0))
            grid += step_ms
        next_grid[key] = grid
        try:
            book.apply(ev)
        except DeltaBeforeSnapshot:
            quarantined += 1
    for key, book in books.items():
        grid = next_grid[key]
        stop = end_ts_ms if end_ts_ms is not None else (book.last_event_ts or grid)
        while grid <= stop:
            rows.append(_sample_row(book, grid / 1000.0))
            grid += step_ms
    frame = pd.DataFrame(rows, columns=SAMPLE_COLUMNS)
    frame.attrs["n_quarantined"] = quarantined
    return frame


def iter_best_of_book(events: Iterable[BookEvent]) -> Iterator[tuple[BookEvent, OrderBook]]:
    """Replay a single-market stream yielding (event, book-after-apply)."""
    book: OrderBook | None = None
    for ev in events:
        if book is None:
            book = OrderBook(ev.market_id, ev.token_id)
        try:
            book.apply(ev)
        except DeltaBeforeSnapshot:
            continue
        yield ev, book
