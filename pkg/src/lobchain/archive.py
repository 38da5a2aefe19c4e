"""Hourly feed archive: columnar IO and the live collector.

One parquet file per UTC hour, one row per feed message with the raw JSON
payload kept as a string and parsed on demand (eager validation of billions
of rows is not worth the wall time; parsing happens after market/window
filters). Row schema: market_id, token_id, event_type, data,
timestamp_received, timestamp_created_at.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from .feed import PRICE_CHANGE, BookEvent, event_from_mapping

ARCHIVE_COLUMNS = [
    "market_id", "token_id", "event_type", "data",
    "timestamp_received", "timestamp_created_at",
]


def event_to_row(ev: BookEvent) -> dict:
    """Serialize a BookEvent back into an archive row."""
    if ev.kind == PRICE_CHANGE:
        side, price, size = ev.delta()
        data = {
            "change_price": f"{price / 1000.0:.3f}",
            "change_side": side,
            "change_size": repr(float(size)),
        }
    else:
        data = {}
        if ev.bids is not None:
            data["bids"] = [[f"{p / 1000.0:.3f}", repr(float(s))] for p, s in ev.bids]
        if ev.asks is not None:
            data["asks"] = [[f"{p / 1000.0:.3f}", repr(float(s))] for p, s in ev.asks]
    return {
        "market_id": ev.market_id,
        "token_id": ev.token_id,
        "event_type": ev.kind,
        "data": json.dumps(data, separators=(",", ":")),
        "timestamp_received": int(ev.ts_received),
        "timestamp_created_at": int(ev.ts_created),
    }


def events_to_frame(events: Iterable[BookEvent]) -> pd.DataFrame:
    frame = pd.DataFrame([event_to_row(e) for e in events], columns=ARCHIVE_COLUMNS)
    if not frame.empty:
        frame["timestamp_received"] = frame["timestamp_received"].astype(np.int64)
        frame["timestamp_created_at"] = frame["timestamp_created_at"].astype(np.int64)
    return frame


def frame_to_events(frame: pd.DataFrame) -> Iterator[BookEvent]:
    """Parse archive rows in stored (arrival) order."""
    for row in frame.itertuples(index=False):
        yield event_from_mapping({
            "market_id": row.market_id,
            "token_id": row.token_id,
            "event_type": row.event_type,
            "data": row.data,
            "timestamp_received": row.timestamp_received,
            "timestamp_created_at": row.timestamp_created_at,
        })


def hour_label(ts_ms: int) -> str:
    dt = datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H")


def write_hourly(frame: pd.DataFrame, out_dir) -> list[Path]:
    """Split archive rows into one parquet file per UTC hour of creation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    labels = frame["timestamp_created_at"].map(hour_label)
    for label, chunk in frame.groupby(labels, sort=True):
        path = out_dir / f"feed_{label}.parquet"
        chunk.reset_index(drop=True).to_parquet(path, index=False)
        paths.append(path)
    return paths


def read_archive(source) -> pd.DataFrame:
    """Read one file, a directory of hourly files, or a list of paths."""
    src = Path(source) if not isinstance(source, (list, tuple)) else source
    if isinstance(src, Path):
        paths = sorted(src.glob("feed_*.parquet")) if src.is_dir() else [src]
    else:
        paths = [Path(p) for p in src]
    if not paths:
        return pd.DataFrame(columns=ARCHIVE_COLUMNS)
    frames = [pd.read_parquet(p) for p in paths]
    return pd.concat(frames, ignore_index=True)[ARCHIVE_COLUMNS]


def collect_ws(url: str, out_dir, subscribe: dict | None = None,
               max_events: int | None = None,
               flush_every: int = 50_000) -> list[Path]:
    """Subscribe to a live feed socket and append rows to hourly files.

    Messages must already carry the archive envelope; timestamp_created_at
    is stamped on arrival. Requires the optional websockets dependency.
    """
    import asyncio
    import time

    try:
        import websockets
    except ImportError as exc:  # pragma: no cover - env without the extra
        raise RuntimeError("live collection needs the 'websockets' extra") from exc

    rows: list[dict] = []
    written: list[Path] = []

    def flush():
        if rows:
            written.extend(write_hourly(pd.DataFrame(rows, columns=ARCHIVE_COLUMNS),
                                        out_dir))
            rows.clear()

    async def run():
        async with websockets.connect(url) as ws:
            if subscribe is not None:
                await ws.send(json.dumps(subscribe))
            count = 0
            async for message in ws:
                obj = json.loads(message)
                obj.setdefault("timestamp_created_at", int(time.time() * 1000))
                rows.append({key: obj[key] for key in ARCHIVE_COLUMNS})
                count += 1
                if len(rows) >= flush_every:
                    flush()
                if max_events is not None and count >= max_events:
                    break

    asyncio.run(run())
    flush()
    return written
