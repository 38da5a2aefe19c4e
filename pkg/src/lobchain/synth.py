"""Ground-truth synthetic venue.

Generates maker/taker flow against a simulated book and emits the same
columnar schemas as the real ingestion paths: an authoritative fill record
(with counterparties and asset ids), a taker-blind feed of snapshots and
deltas, and a truth log labeling every feed delta as trade- or maker-
caused. Downstream modules cannot tell synthetic from real data.

Price process: quotes sit a planted half-spread around the tick-rounded
efficient probability, which moves by a planted linear impact per signed
USDC plus optional noise. Taker trades arrive on a Poisson clock and hit
the touch; the touch is replenished (same price) after each fill, and the
whole ladder is re-quoted via per-side snapshots when the efficient tick
moves, so re-quoting never fabricates size decrements. Maker churn
(cancel-replace) is injected separately and only ever as deltas.

Fills carry block numbers at floor(t / block_interval) and get wall-clock
stamps through the same anchor interpolation the real pipeline uses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import pandas as pd

from .chain import synthetic_hash
from .errors import ConfigInvalid
from .feed import PRICE_CHANGE, SNAPSHOT, SAMPLE_COLUMNS, BookEvent
from .trades import trades_from_fills

WASH_NONE, WASH_SELF, WASH_FLIP, WASH_CYCLE = 0, 1, 2, 3
WASH_PATTERNS = {"self_match": WASH_SELF, "flip_pair": WASH_FLIP, "three_cycle": WASH_CYCLE}

LABEL_TRADE = "trade"
LABEL_MAKER = "cancel"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_markets: int = 1
    n_trades: int = 1_000           # taker arrivals per market
    horizon: float | None = None    # seconds; overrides n_trades when set
    taker_rate: float = 2.0         # per second
    buy_probability: float = 0.5
    mid0: float = 0.5
    half_spread: float = 0.01       # planted h, probability
    impact: float = 0.0             # planted lambda0, probability per USDC
    noise_sd: float = 0.0           # efficient-price jitter per trade
    trade_size_mean: float = 2.0    # USDC
    size_dist: str = "exp"          # "exp" | "const"
    depth_levels: int = 10
    level_size: float = 100.0       # tokens resting per level
    maker_count: int = 8
    maker_skew: float = 1.0         # maker volume ~ rank^-skew
    taker_pool: int = 500
    cancel_replace_rate: float = 0.0
    wash_rate: float = 0.0
    wash_pattern: str = "self_match"
    block_interval: float = 2.0
    latency_ms_median: float = 40.0

    def validate(self) -> None:
        for name in ("buy_probability", "cancel_replace_rate", "wash_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigInvalid(f"{name}={v} outside [0, 1]")
        if not 0.0 < self.half_spread < 0.5:
            raise ConfigInvalid(f"half_spread={self.half_spread} outside (0, 0.5)")
        if self.n_trades <= 0 or self.n_markets <= 0:
            raise ConfigInvalid("n_trades and n_markets must be positive")
        if self.horizon is not None and self.horizon <= 0:
            raise ConfigInvalid(f"horizon={self.horizon} must be positive")
        if self.taker_rate <= 0 or self.block_interval <= 0:
            raise ConfigInvalid("taker_rate and block_interval must be positive")
        if not 0.0 < self.mid0 < 1.0:
            raise ConfigInvalid(f"mid0={self.mid0} outside (0, 1)")
        if self.wash_pattern not in WASH_PATTERNS:
            raise ConfigInvalid(f"unknown wash_pattern {self.wash_pattern!r}")
        if self.size_dist not in ("exp", "const"):
            raise ConfigInvalid(f"unknown size_dist {self.size_dist!r}")
        if self.depth_levels < 1 or self.level_size <= 0:
            raise ConfigInvalid("need at least one ladder level of positive size")

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            cfg = cls(**json.load(fh))
        cfg.validate()
        return cfg


def _rng(config: ScenarioConfig, market: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, market, stream])


def _addresses(prefix: str, count: int, salt) -> np.ndarray:
    return np.array(
        ["0x" + synthetic_hash(prefix, salt, i)[2:42] for i in range(count)],
        dtype=object,
    )


@dataclass
class SyntheticMarket:
    """One simulated market: trade-level arrays plus lazy feed emission."""

    config: ScenarioConfig
    index: int
    market_id: str
    yes_token_id: str
    no_token_id: str
    ts: np.ndarray            # trade seconds, merged organic + wash legs
    sign: np.ndarray
    price_milli: np.ndarray
    q_milli: np.ndarray       # milli-tokens; usdc base units = q_milli * price_milli
    usdc_units: np.ndarray
    maker: np.ndarray
    taker: np.ndarray
    block_number: np.ndarray
    wash_kind: np.ndarray
    wash_leg: np.ndarray
    center_before: np.ndarray  # quote center (milli) when the trade printed
    center_after: np.ndarray
    churn_mask: np.ndarray     # maker churn injected before trade k
    n_mu_clamps: int = 0

    @property
    def h_milli(self) -> int:
        return int(round(self.config.half_spread * 1000))

    @property
    def horizon(self) -> float:
        return float(self.ts[-1]) if self.ts.size else 0.0

    # -- authoritative record -------------------------------------------------

    def _fill_ids(self, prefix: str) -> np.ndarray:
        stem = f"0x{prefix}{self.config.seed & 0xFFFF:04x}{self.index:06x}"
        pad = 64 - (len(stem) - 2) - 12
        return np.array([f"{stem}{0:0{pad}x}{i:012x}" for i in range(self.ts.size)],
                        dtype=object)

    def fills_frame(self) -> pd.DataFrame:
        n = self.ts.size
        buys = self.sign == 1
        q_units = self.q_milli * 1000  # milli-tokens -> 1e-6 base units
        token = self.yes_token_id
        # trades are time-sorted so blocks are non-decreasing
        log_index = np.arange(n) - np.searchsorted(self.block_number, self.block_number)
        return pd.DataFrame({
            "tx_hash": self._fill_ids("aa"),
            "log_index": log_index.astype(np.int64),
            "order_hash": self._fill_ids("bb"),
            "maker": self.maker,
            "taker": self.taker,
            "maker_asset_id": np.where(buys, token, "0"),
            "taker_asset_id": np.where(buys, "0", token),
            "maker_amount": np.where(buys, q_units, self.usdc_units).astype(np.int64),
            "taker_amount": np.where(buys, self.usdc_units, q_units).astype(np.int64),
            "fee": np.zeros(n, dtype=np.int64),
            "block_number": self.block_number,
            # the same single-anchor interpolation the real pipeline uses
            "block_ts": self.block_number * self.config.block_interval,
        })

    def token_map(self) -> dict[str, str]:
        return {self.yes_token_id: self.market_id, self.no_token_id: self.market_id}

    def trades_frame(self) -> pd.DataFrame:
        """On-chain trades via the production fill->trade converter."""
        trades, tally = trades_from_fills(self.fills_frame(), self.token_map())
        if tally.total:
            raise AssertionError(f"generator produced inadmissible fills: {tally}")
        return trades

    def truth_fills(self) -> pd.DataFrame:
        return pd.DataFrame({
            "tx_hash": self._fill_ids("aa"),
            "wash_kind": self.wash_kind,
            "wash_leg": self.wash_leg,
        })

    # -- taker-blind feed ------------------------------------------------------

    def _ladder_prices(self, center: int, side: str) -> list[int]:
        h, L = self.h_milli, self.config.depth_levels
        if side == "bid":
            return [center - h - i for i in range(L)]
        return [center + h + i for i in range(L)]

    def _snapshot_event(self, center: int, side: str, ts_ms: int, lat_ms: int) -> BookEvent:
        size = self.config.level_size
        levels = tuple((p, size) for p in self._ladder_prices(center, side)
                       if 0 < p < 1000)
        return BookEvent(self.market_id, self.yes_token_id, SNAPSHOT,
                         levels if side == "bid" else None,
                         levels if side == "ask" else None,
                         ts_ms, ts_ms + lat_ms)

    def _delta_event(self, side: str, price: int, size: float,
                     ts_ms: int, lat_ms: int) -> BookEvent:
        level = ((price, size),)
        return BookEvent(self.market_id, self.yes_token_id, PRICE_CHANGE,
                         level if side == "bid" else None,
                         level if side == "ask" else None,
                         ts_ms, ts_ms + lat_ms)

    def feed_events(self, with_labels: bool = False) -> Iterator:
        """Emit the feed stream in arrival order.

        with_labels=True yields (event, label_or_None); deltas are labeled
        trade- or maker-caused, snapshots carry None.
        """
        cfg = self.config
        lat = _rng(cfg, self.index, 7)
        churn_pick = _rng(cfg, self.index, 8)
        sigma = 1.0
        mu_log = np.log(cfg.latency_ms_median)

        def lat_ms() -> int:
            return max(0, int(round(float(lat.lognormal(mu_log, sigma)))))

        def emit(ev, label):
            return (ev, label) if with_labels else ev

        ladders = {"bid": {}, "ask": {}}
        outer = {"bid": 0, "ask": 0}

        def requote(center: int, ts_ms: int):
            for side in ("bid", "ask"):
                ladders[side] = {p: cfg.level_size
                                 for p in self._ladder_prices(center, side)
                                 if 0 < p < 1000}
                outer[side] = 0

        center = int(self.center_before[0]) if self.ts.size else int(round(cfg.mid0 * 1000))
        requote(center, 0)
        yield emit(self._snapshot_event(center, "bid", 0, lat_ms()), None)
        yield emit(self._snapshot_event(center, "ask", 0, lat_ms()), None)

        for k in range(self.ts.size):
            ts_ms = int(round(self.ts[k] * 1000.0))
            if self.churn_mask[k]:
                side = "bid" if churn_pick.random() < 0.5 else "ask"
                ladder = ladders[side]
                depth = len(self._ladder_prices(center, side))
                level_i = int(churn_pick.integers(0, min(3, depth)))
                prices = self._ladder_prices(center, side)
                p_cancel = prices[level_i]
                resting = ladder.get(p_cancel)
                if resting:
                    outer[side] += 1
                    step = depth + outer[side]
                    p_fresh = center - self.h_milli - step if side == "bid" \
                        else center + self.h_milli + step
                    if 0 < p_fresh < 1000:
                        ladder.pop(p_cancel, None)
                        yield emit(self._delta_event(side, p_cancel, 0.0,
                                                     ts_ms, lat_ms()), LABEL_MAKER)
                        ladder[p_fresh] = ladder.get(p_fresh, 0.0) + 0.0 + resting
                        yield emit(self._delta_event(side, p_fresh, ladder[p_fresh],
                                                     ts_ms, lat_ms()), LABEL_MAKER)
                        if level_i == 0:
                            ladder[p_cancel] = cfg.level_size
                            yield emit(self._delta_event(side, p_cancel, cfg.level_size,
                                                         ts_ms, lat_ms()), LABEL_MAKER)

            side = "ask" if self.sign[k] == 1 else "bid"
            price = int(self.price_milli[k])
            q_tokens = self.q_milli[k] / 1000.0
            resting = ladders[side].get(price, cfg.level_size)
            new_size = resting - q_tokens
            ladders[side][price] = new_size
            yield emit(self._delta_event(side, price, new_size, ts_ms, lat_ms()),
                       LABEL_TRADE)

            after = int(self.center_after[k])
            if after != center:
                center = after
                requote(center, ts_ms)
                yield emit(self._snapshot_event(center, "bid", ts_ms, lat_ms()), None)
                yield emit(self._snapshot_event(center, "ask", ts_ms, lat_ms()), None)
            else:
                ladders[side][price] = cfg.level_size
                yield emit(self._delta_event(side, price, cfg.level_size,
                                             ts_ms, lat_ms()), LABEL_MAKER)

    def feed_truth(self) -> pd.DataFrame:
        """Per-feed-event labels aligned with stream position."""
        rows = [
            {"event_index": i, "kind": ev.kind, "label": label}
            for i, (ev, label) in enumerate(self.feed_events(with_labels=True))
        ]
        return pd.DataFrame(rows)

    # -- analytic book sampling --------------------------------------------------

    def book_samples(self, step: float, end: float | None = None) -> pd.DataFrame:
        """Grid samples of the quote state implied by the trade path.

        Equivalent to replaying feed_events through the book engine when no
        maker churn is injected (the churn holes only touch deeper levels).
        """
        cfg = self.config
        end = self.horizon if end is None else end
        grid = np.arange(0.0, end + step / 2, step)
        idx = np.searchsorted(self.ts, grid, side="right") - 1
        center0 = int(self.center_before[0]) if self.ts.size else int(round(cfg.mid0 * 1000))
        centers = np.where(idx >= 0, self.center_after[np.clip(idx, 0, None)], center0)
        h = self.h_milli
        depth1 = cfg.level_size
        depth10 = min(10, cfg.depth_levels) * cfg.level_size
        mid = centers / 1000.0
        return pd.DataFrame({
            "market_id": self.market_id,
            "token_id": self.yes_token_id,
            "ts": grid,
            "best_bid": (centers - h) / 1000.0,
            "best_ask": (centers + h) / 1000.0,
            "mid": mid,
            "quoted_half_bps": h / 1000.0 / mid * 1e4,
            "depth_bid_l1": depth1,
            "depth_bid_l10": depth10,
            "depth_ask_l1": depth1,
            "depth_ask_l10": depth10,
            "crossed": False,
        })[SAMPLE_COLUMNS]


@dataclass
class Scenario:
    config: ScenarioConfig
    markets: list[SyntheticMarket] = field(default_factory=list)

    def fills_frame(self) -> pd.DataFrame:
        return pd.concat([m.fills_frame() for m in self.markets], ignore_index=True)

    def trades_frame(self) -> pd.DataFrame:
        return pd.concat([m.trades_frame() for m in self.markets], ignore_index=True)

    def token_map(self) -> dict[str, str]:
        table: dict[str, str] = {}
        for m in self.markets:
            table.update(m.token_map())
        return table


def _draw_sizes(cfg: ScenarioConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if cfg.size_dist == "const":
        raw = np.full(n, cfg.trade_size_mean)
    else:
        raw = rng.exponential(cfg.trade_size_mean, n)
    # keep single fills well inside one resting level
    cap = cfg.level_size * cfg.mid0 / 4.0
    return np.clip(raw, 0.01, cap)


def _generate_market(cfg: ScenarioConfig, index: int) -> SyntheticMarket:
    market_id = "0x" + synthetic_hash("market", cfg.seed, index)[2:66]
    yes_token = str(int(synthetic_hash("yes", cfg.seed, index)[2:34], 16))
    no_token = str(int(synthetic_hash("no", cfg.seed, index)[2:34], 16))

    n = cfg.n_trades if cfg.horizon is None else max(1, round(cfg.horizon * cfg.taker_rate))
    gaps = _rng(cfg, index, 0).exponential(1.0 / cfg.taker_rate, n)
    ts = np.cumsum(gaps) + 1.0 / cfg.taker_rate
    sign = np.where(_rng(cfg, index, 1).random(n) < cfg.buy_probability, 1, -1)
    v_raw = _draw_sizes(cfg, _rng(cfg, index, 2), n)
    noise = (_rng(cfg, index, 3).normal(0.0, cfg.noise_sd, n)
             if cfg.noise_sd > 0 else np.zeros(n))

    weights = np.arange(1, cfg.maker_count + 1, dtype=float) ** (-cfg.maker_skew)
    weights /= weights.sum()
    maker_pool = _addresses("maker", cfg.maker_count, cfg.seed)
    taker_pool = _addresses("taker", cfg.taker_pool, cfg.seed)
    maker = maker_pool[_rng(cfg, index, 4).choice(cfg.maker_count, size=n, p=weights)]
    taker = taker_pool[_rng(cfg, index, 5).integers(0, cfg.taker_pool, size=n)]

    wash_rng = _rng(cfg, index, 6)
    wash_kind = np.zeros(n, dtype=np.int64)
    wash_leg = np.zeros(n, dtype=np.int64)
    if cfg.wash_rate > 0.0:
        wash_kind[wash_rng.random(n) < cfg.wash_rate] = WASH_PATTERNS[cfg.wash_pattern]

    # assemble merged trade records; wash partner legs reuse the first leg's
    # token quantity (a roundtrip moves the same tokens back)
    rec_ts = list(ts)
    rec_sign = list(sign)
    rec_vraw = list(v_raw)
    rec_noise = list(noise)
    rec_maker = list(maker)
    rec_taker = list(taker)
    rec_kind = list(wash_kind)
    rec_leg = list(wash_leg)
    rec_qref = [-1] * n
    for i in np.flatnonzero(wash_kind):
        kind = wash_kind[i]
        if kind == WASH_SELF:
            w = "0x" + synthetic_hash("wash", cfg.seed, index, i, "self")[2:42]
            rec_maker[i] = w
            rec_taker[i] = w
            continue
        if kind == WASH_FLIP:
            a = "0x" + synthetic_hash("wash", cfg.seed, index, i, "a")[2:42]
            b = "0x" + synthetic_hash("wash", cfg.seed, index, i, "b")[2:42]
            rec_maker[i], rec_taker[i] = a, b
            dt = float(wash_rng.uniform(2.0, 100.0 * cfg.block_interval))
            rec_ts.append(ts[i] + dt)
            rec_sign.append(-sign[i])
            rec_vraw.append(v_raw[i])
            rec_noise.append(0.0)
            rec_maker.append(b)
            rec_taker.append(a)
            rec_kind.append(WASH_FLIP)
            rec_leg.append(1)
            rec_qref.append(i)
            continue
        # three-wallet cycle: W1->W2->W3->W1, beyond the pair detector by design
        w1 = "0x" + synthetic_hash("wash", cfg.seed, index, i, "w1")[2:42]
        w2 = "0x" + synthetic_hash("wash", cfg.seed, index, i, "w2")[2:42]
        w3 = "0x" + synthetic_hash("wash", cfg.seed, index, i, "w3")[2:42]
        rec_maker[i], rec_taker[i] = w1, w2
        t_prev = ts[i]
        for leg, (mk, tk) in enumerate(((w2, w3), (w3, w1)), start=1):
            t_prev = t_prev + float(wash_rng.uniform(2.0, 40.0 * cfg.block_interval))
            rec_ts.append(t_prev)
            rec_sign.append(-1 if wash_rng.random() < 0.5 else 1)
            rec_vraw.append(v_raw[i])
            rec_noise.append(0.0)
            rec_maker.append(mk)
            rec_taker.append(tk)
            rec_kind.append(WASH_CYCLE)
            rec_leg.append(leg)
            rec_qref.append(i)

    order = np.argsort(np.asarray(rec_ts), kind="stable")
    m = order.size
    mts = np.asarray(rec_ts)[order]
    msign = np.asarray(rec_sign, dtype=np.int64)[order]
    mvraw = np.asarray(rec_vraw)[order]
    mnoise = np.asarray(rec_noise)[order]
    mmaker = np.asarray(rec_maker, dtype=object)[order]
    mtaker = np.asarray(rec_taker, dtype=object)[order]
    mkind = np.asarray(rec_kind, dtype=np.int64)[order]
    mleg = np.asarray(rec_leg, dtype=np.int64)[order]
    mqref = np.asarray(rec_qref, dtype=np.int64)[order]
    orig_pos = np.empty(n, dtype=np.int64)  # organic index -> merged position
    for pos, oi in enumerate(order):
        if oi < n:
            orig_pos[oi] = pos

    h_milli = int(round(cfg.half_spread * 1000))
    lo_c, hi_c = h_milli + 1, 999 - h_milli - 1

    center_before = np.empty(m, dtype=np.int64)
    q_milli = np.empty(m, dtype=np.int64)
    usdc_units = np.empty(m, dtype=np.int64)
    price_milli = np.empty(m, dtype=np.int64)
    n_clamps = 0

    if cfg.impact == 0.0 and cfg.noise_sd == 0.0:
        center = min(hi_c, max(lo_c, int(round(cfg.mid0 * 1000))))
        center_before[:] = center
        price_milli[:] = center + h_milli * msign
        base_q = np.maximum(1, np.round(1000.0 * mvraw / (price_milli / 1000.0))).astype(np.int64)
        for pos in range(m):
            q_milli[pos] = base_q[pos] if mqref[pos] < 0 else q_milli[orig_pos[mqref[pos]]]
        usdc_units[:] = q_milli * price_milli
        center_after = center_before.copy()
    else:
        mu = cfg.mid0
        impact = cfg.impact
        for pos in range(m):
            c = round(mu * 1000.0)
            if c < lo_c:
                c, n_clamps = lo_c, n_clamps + 1
            elif c > hi_c:
                c, n_clamps = hi_c, n_clamps + 1
            s = msign[pos]
            p = c + h_milli * s
            if mqref[pos] >= 0:
                q = q_milli[orig_pos[mqref[pos]]]
            else:
                q = max(1, round(1000.0 * mvraw[pos] * 1000.0 / p))
            u = q * p
            center_before[pos] = c
            price_milli[pos] = p
            q_milli[pos] = q
            usdc_units[pos] = u
            mu += impact * s * (u * 1e-6) + mnoise[pos]
        c = round(mu * 1000.0)
        final_center = min(hi_c, max(lo_c, c))
        center_after = np.empty(m, dtype=np.int64)
        center_after[:-1] = center_before[1:]
        center_after[-1] = final_center

    churn = (_rng(cfg, index, 9).random(m) < cfg.cancel_replace_rate
             if cfg.cancel_replace_rate > 0 else np.zeros(m, dtype=bool))

    return SyntheticMarket(
        config=cfg,
        index=index,
        market_id=market_id,
        yes_token_id=yes_token,
        no_token_id=no_token,
        ts=mts,
        sign=msign,
        price_milli=price_milli,
        q_milli=q_milli,
        usdc_units=usdc_units,
        maker=mmaker,
        taker=mtaker,
        block_number=np.floor(mts / cfg.block_interval).astype(np.int64),
        wash_kind=mkind,
        wash_leg=mleg,
        center_before=center_before,
        center_after=center_after,
        churn_mask=churn,
        n_mu_clamps=n_clamps,
    )


def generate(config: ScenarioConfig) -> Scenario:
    """Build every market of a scenario deterministically from its seed."""
    config.validate()
    markets = [_generate_market(config, i) for i in range(config.n_markets)]
    return Scenario(config=config, markets=markets)
