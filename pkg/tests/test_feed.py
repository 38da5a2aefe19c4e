import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobchain.errors import (
    DeltaBeforeSnapshot,
    EmptySide,
    MalformedPayload,
    UnknownEventType,
)
from lobchain.feed import (
    PRICE_CHANGE,
    SNAPSHOT,
    BookEvent,
    OrderBook,
    parse_feed_event,
    replay,
    sample_books,
)


def envelope(event_type, data, market="0x" + "ab" * 32, token="123456", ts=1000, created=1042):
    return json.dumps({
        "market_id": market,
        "token_id": token,
        "event_type": event_type,
        "data": data,
        "timestamp_received": ts,
        "timestamp_created_at": created,
    })


def delta(side, price, size, ts=1000, market="0x" + "ab" * 32, token="123456"):
    return parse_feed_event(envelope(
        PRICE_CHANGE,
        {"change_price": price, "change_side": side, "change_size": size},
        market=market, token=token, ts=ts, created=ts + 40,
    ))


def snapshot(bids=None, asks=None, ts=0, market="0x" + "ab" * 32, token="123456"):
    data = {}
    if bids is not None:
        data["bids"] = bids
    if asks is not None:
        data["asks"] = asks
    return parse_feed_event(envelope(SNAPSHOT, data, market=market, token=token,
                                     ts=ts, created=ts + 40))


def fresh_book(bids=(), asks=()):
    book = OrderBook("0x" + "ab" * 32, "123456")
    book.apply(snapshot(bids=list(bids), asks=list(asks)))
    return book


class TestParser:
    def test_zero_size_delta_is_deletion_semantics(self):
        ev = delta("bid", "0.430", "0")
        assert ev.kind == PRICE_CHANGE
        side, price, size = ev.delta()
        assert (side, price, size) == ("bid", 430, 0.0)

    def test_delta_has_exactly_one_level(self):
        ev = delta("ask", "0.520", "900.5")
        assert ev.asks is not None and len(ev.asks) == 1
        assert ev.bids is None

    def test_empty_snapshot_has_zero_levels(self):
        ev = snapshot(bids=[], asks=[])
        assert ev.kind == SNAPSHOT
        assert ev.bids == () and ev.asks == ()

    def test_one_sided_snapshot(self):
        ev = snapshot(asks=[["0.52", "100"], ["0.53", "50"]])
        assert ev.bids is None
        assert ev.asks == ((520, 100.0), (530, 50.0))
        assert ev.side == "ask"

    def test_truncated_json_malformed(self):
        with pytest.raises(MalformedPayload):
            parse_feed_event('{"market_id": "0xab", "event_')

    def test_unknown_event_type(self):
        with pytest.raises(UnknownEventType):
            parse_feed_event(envelope("tick", {}))

    def test_missing_field_malformed(self):
        with pytest.raises(MalformedPayload):
            parse_feed_event(envelope(PRICE_CHANGE, {"change_price": "0.5"}))

    @pytest.mark.parametrize("price", ["0", "1", "1.5", "-0.2", "0.1234", "abc"])
    def test_bad_prices_rejected(self, price):
        with pytest.raises(MalformedPayload):
            delta("bid", price, "10")

    def test_timestamps_populated(self):
        ev = delta("bid", "0.480", "1500", ts=7777)
        assert ev.ts_received == 7777 and ev.ts_created == 7817

    def test_data_as_nested_object_or_string(self):
        raw = json.loads(envelope(PRICE_CHANGE, {"change_price": "0.5",
                                                 "change_side": "sell",
                                                 "change_size": "3"}))
        raw["data"] = json.dumps(raw["data"])
        ev = parse_feed_event(json.dumps(raw))
        assert ev.delta() == ("ask", 500, 3.0)


class TestApply:
    def test_delta_inserts_level(self):
        book = fresh_book()
        book.apply(delta("bid", "0.480", "1500"))
        assert book.bids == {480: 1500.0}
        assert book.best_bid_milli == 480

    def test_zero_size_removes_level(self):
        book = fresh_book(asks=[["0.520", "900"]])
        book.apply(delta("ask", "0.520", "0"))
        assert 520 not in book.asks

    def test_delta_before_snapshot_raises(self):
        book = OrderBook("0x" + "ab" * 32, "123456")
        with pytest.raises(DeltaBeforeSnapshot):
            book.apply(delta("bid", "0.480", "1500"))

    def test_quarantine_in_replay(self):
        events = [delta("bid", "0.480", "1500"), snapshot(bids=[["0.4", "1"]])]
        books, stats = replay(events)
        assert stats.n_quarantined == 1
        assert stats.n_applied == 1

    def test_snapshot_replaces_only_carried_side(self):
        book = fresh_book(bids=[["0.40", "10"]], asks=[["0.60", "10"]])
        book.apply(snapshot(asks=[["0.55", "5"]]))
        assert book.asks == {550: 5.0}
        assert book.bids == {400: 10.0}  # untouched

    def test_snapshot_idempotent(self):
        snap = snapshot(bids=[["0.40", "10"], ["0.39", "4"]])
        book = fresh_book()
        book.apply(snap)
        once = book.digest()
        book.apply(snap)
        assert book.digest() == once

    def test_crossed_book_flagged_not_rejected(self):
        book = fresh_book(bids=[["0.40", "10"]], asks=[["0.60", "10"]])
        book.apply(delta("bid", "0.650", "5"))
        assert book.suspect and book.is_crossed()
        assert book.best_bid_milli == 650  # state still updated

    def test_wrong_market_rejected(self):
        book = OrderBook("0x" + "cd" * 32, "999")
        with pytest.raises(ValueError):
            book.apply(snapshot(bids=[["0.5", "1"]]))


class TestQueries:
    def test_half_spread_basic(self):
        book = fresh_book(bids=[["0.49", "10"]], asks=[["0.51", "10"]])
        assert book.quoted_half_spread_bps() == pytest.approx(200.0)
        assert book.mid() == pytest.approx(0.50)

    def test_half_spread_one_tick(self):
        book = fresh_book(bids=[["0.500", "10"]], asks=[["0.501", "10"]])
        assert book.quoted_half_spread_bps() == pytest.approx(9.99001, abs=1e-4)

    def test_empty_side_raises(self):
        book = fresh_book(bids=[["0.49", "10"]])
        with pytest.raises(EmptySide):
            book.quoted_half_spread_bps()
        with pytest.raises(EmptySide):
            book.mid()

    def test_depth_uniform_ladder(self):
        asks = [[f"0.5{i:02d}", "7"] for i in range(10)]
        book = fresh_book(asks=asks)
        assert book.cumulative_depth("ask", 10) == pytest.approx(70.0)
        assert book.cumulative_depth("ask", 1) == pytest.approx(7.0)

    def test_depth_short_ladder_and_empty(self):
        book = fresh_book(bids=[["0.40", "3"]])
        assert book.cumulative_depth("bid", 10) == 3.0
        assert book.cumulative_depth("ask", 10) == 0.0

    def test_depth_takes_best_levels(self):
        book = fresh_book(bids=[["0.40", "1"], ["0.41", "2"], ["0.39", "4"]])
        assert book.cumulative_depth("bid", 2) == pytest.approx(3.0)  # 0.41 + 0.40


# random stream machinery for replay/oracle properties

def random_events(rng, n=400, market="0x" + "ab" * 32, token="1"):
    events = [snapshot(
        bids=[[f"{0.400 + 0.001 * i:.3f}", str(10 + i)] for i in range(5)],
        asks=[[f"{0.600 + 0.001 * i:.3f}", str(10 + i)] for i in range(5)],
        market=market, token=token,
    )]
    for k in range(n):
        side = "bid" if rng.random() < 0.5 else "ask"
        base = 400 if side == "bid" else 600
        price = base + int(rng.integers(-30, 31))
        size = float(rng.choice([0.0, 1.0, 2.5, 10.0, 100.0]))
        events.append(delta(side, f"{price / 1000:.3f}", repr(size),
                            ts=1000 + k, market=market, token=token))
    return events


class TestInvariants:
    def test_replay_determinism(self, rng):
        events = random_events(rng)
        book_a, _ = replay(events)
        book_b, _ = replay(events)
        key = next(iter(book_a))
        assert book_a[key].digest() == book_b[key].digest()

    def test_zero_size_absent_after_any_deletion(self, rng):
        events = random_events(rng)
        book = OrderBook("0x" + "ab" * 32, "1")
        for ev in events:
            book.apply(ev)
            if ev.kind == PRICE_CHANGE:
                side, price, size = ev.delta()
                ladder = book.bids if side == "bid" else book.asks
                if size == 0.0:
                    assert price not in ladder

    def test_incremental_best_matches_full_scan(self, rng):
        events = random_events(rng, n=2000)
        book = OrderBook("0x" + "ab" * 32, "1")
        for ev in events:
            book.apply(ev)
            assert book.best_bid_milli == (max(book.bids) if book.bids else None)
            assert book.best_ask_milli == (min(book.asks) if book.asks else None)

    @given(st.lists(st.tuples(st.sampled_from(["bid", "ask"]),
                              st.integers(380, 620),
                              st.sampled_from([0.0, 1.0, 5.0])),
                    max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_sizes_always_positive(self, moves):
        book = fresh_book(bids=[["0.45", "5"]], asks=[["0.55", "5"]])
        for side, price, size in moves:
            book.apply(delta(side, f"{price / 1000:.3f}", repr(size)))
        assert all(s > 0 for s in book.bids.values())
        assert all(s > 0 for s in book.asks.values())


class TestSampling:
    def test_grid_samples_and_crossed_exclusion(self):
        events = [
            snapshot(bids=[["0.49", "10"]], asks=[["0.51", "10"]], ts=0),
            delta("bid", "0.480", "5", ts=1500),
            delta("bid", "0.520", "4", ts=2500),  # crosses the book
        ]
        frame = sample_books(events, step_s=1.0, end_ts_ms=3000)
        assert list(frame["ts"]) == [0.0, 1.0, 2.0, 3.0]
        assert frame.loc[frame["ts"] == 1.0, "mid"].iloc[0] == pytest.approx(0.50)
        crossed = frame.loc[frame["ts"] == 3.0].iloc[0]
        assert crossed["crossed"] and np.isnan(crossed["mid"])

    def test_sample_uses_events_at_or_before_grid(self):
        events = [
            snapshot(bids=[["0.40", "1"]], asks=[["0.60", "1"]], ts=0),
            delta("ask", "0.580", "2", ts=1000),  # lands exactly on the grid
        ]
        frame = sample_books(events, step_s=1.0, end_ts_ms=1000)
        assert frame.loc[frame["ts"] == 1.0, "best_ask"].iloc[0] == pytest.approx(0.58)
