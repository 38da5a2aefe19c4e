"""Batched eth_getLogs scraping with adaptive chunk sizing.

The scraper walks a block range in chunks, halves the chunk on provider
rejection, grows it 25% after a run of successes, deduplicates logs on
(transactionHash, logIndex), and writes one immutable parquet shard per
5,000-block slice. Shard content depends only on the chain, never on the
chunk schedule, so re-scrapes and resumes reconcile by file presence.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from .chain import (
    EXCHANGE_ADDRESS,
    ORDER_FILLED_TOPIC,
    decode_order_filled,
    fills_to_frame,
    interpolate_block_ts,
)
from .errors import ChunkTooLarge, ReorgBufferError, RpcError

REORG_DEPTH = 256
SHARD_BLOCKS = 5_000

# provider messages that mean "ask for fewer blocks", not "try again later"
_TOO_LARGE_MARKERS = (
    "query returned more than", "block range", "too large", "limit exceeded",
    "response size", "10000 results",
)


class RpcClient:
    """Minimal JSON-RPC transport with retry/backoff.

    transport(payload) -> response dict can be injected for tests; the
    default posts to the HTTPS endpoint.
    """

    def __init__(self, endpoint: str, transport: Callable[[dict], dict] | None = None,
                 max_retries: int = 5, backoff_s: float = 0.5, timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.transport = transport
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._id = 0

    def _post(self, payload: dict) -> dict:
        if self.transport is not None:
            return self.transport(payload)
        resp = requests.post(self.endpoint, json=payload, timeout=self.timeout_s)
        resp.raise_for_status()
        return resp.json()

    def call(self, method: str, params: list) -> object:
        self._id += 1
        payload = {"jsonrpc": "2.0", "id": self._id, "method": method, "params": params}
        last: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                reply = self._post(payload)
            except (requests.RequestException, OSError) as exc:
                last = RpcError(f"transport failure: {exc}")
            else:
                if "error" in reply and reply["error"]:
                    err = reply["error"]
                    message = str(err.get("message", err))
                    low = message.lower()
                    if any(marker in low for marker in _TOO_LARGE_MARKERS):
                        raise ChunkTooLarge(message, code=err.get("code"))
                    last = RpcError(message, code=err.get("code"))
                else:
                    return reply.get("result")
            if attempt + 1 < self.max_retries:
                time.sleep(self.backoff_s * (2 ** attempt))
        raise last if last is not None else RpcError("exhausted retries")

    def block_number(self) -> int:
        result = self.call("eth_blockNumber", [])
        return int(str(result), 16)

    def get_logs(self, from_block: int, to_block: int,
                 address: str = EXCHANGE_ADDRESS,
                 topic0: str = ORDER_FILLED_TOPIC) -> list[dict]:
        params = [{
            "fromBlock": hex(from_block),
            "toBlock": hex(to_block),
            "address": address,
            "topics": [topic0],
        }]
        result = self.call("eth_getLogs", params)
        return list(result or [])


@dataclass
class ChunkPolicy:
    init: int = 2_000
    minimum: int = 1
    maximum: int = 50_000
    grow_after: int = 5      # consecutive successes before growth
    grow_factor: float = 1.25


@dataclass
class ScrapeReport:
    n_logs: int = 0
    n_duplicates: int = 0
    n_requests: int = 0
    n_halvings: int = 0
    shards: list[str] = field(default_factory=list)
    skipped_shards: list[str] = field(default_factory=list)


def shard_path(out_dir: Path, slice_start: int, slice_end: int) -> Path:
    return Path(out_dir) / f"fills_{slice_start:010d}_{slice_end:010d}.parquet"


def scrape_fills(rpc: RpcClient, from_block: int, to_block: int, out_dir,
                 address: str = EXCHANGE_ADDRESS, topic0: str = ORDER_FILLED_TOPIC,
                 chunk: ChunkPolicy | None = None, resume: bool = False,
                 head: int | None = None, anchor: tuple[int, float] | None = None,
                 slope: float = 2.0) -> ScrapeReport:
    """Scrape OrderFilled logs in [from_block, to_block] into parquet shards.

    Requires to_block <= head - 256 (reorg buffer). Shards are aligned to
    absolute 5,000-block slices clipped to the scrape range; with resume=True
    slices whose shard file already exists are skipped.
    """
    if from_block > to_block:
        raise ValueError("from_block > to_block")
    if head is None:
        head = rpc.block_number()
    if to_block > head - REORG_DEPTH:
        raise ReorgBufferError(
            f"to_block {to_block} is above head-{REORG_DEPTH} ({head - REORG_DEPTH})")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    policy = chunk or ChunkPolicy()
    report = ScrapeReport()

    slice_ids = range(from_block // SHARD_BLOCKS, to_block // SHARD_BLOCKS + 1)
    for slice_id in slice_ids:
        lo = max(from_block, slice_id * SHARD_BLOCKS)
        hi = min(to_block, (slice_id + 1) * SHARD_BLOCKS - 1)
        path = shard_path(out_dir, lo, hi)
        if resume and path.exists():
            report.skipped_shards.append(path.name)
            continue
        fills = {}
        size = policy.init
        streak = 0
        cursor = lo
        while cursor <= hi:
            upper = min(cursor + size - 1, hi)
            try:
                logs = rpc.get_logs(cursor, upper, address=address, topic0=topic0)
            except ChunkTooLarge:
                report.n_halvings += 1
                if size <= policy.minimum:
                    raise
                size = max(policy.minimum, size // 2)
                streak = 0
                continue
            report.n_requests += 1
            for log in logs:
                fill = decode_order_filled(log)
                key = (fill.tx_hash, fill.log_index)
                if key in fills:
                    report.n_duplicates += 1
                    continue
                if anchor is not None:
                    fill = fill.with_block_ts(
                        interpolate_block_ts(fill.block_number, anchor, slope))
                fills[key] = fill
            cursor = upper + 1
            streak += 1
            if streak >= policy.grow_after:
                size = min(policy.maximum, max(size + 1, int(size * policy.grow_factor)))
                streak = 0
        ordered = sorted(fills.values(),
                         key=lambda f: (f.block_number, f.tx_hash, f.log_index))
        frame = fills_to_frame(ordered)
        tmp = path.with_suffix(".tmp")
        frame.to_parquet(tmp, index=False)
        tmp.replace(path)  # shards appear only once complete
        report.shards.append(path.name)
        report.n_logs += len(ordered)
    return report


def http_transport_from_file(path) -> Callable[[dict], dict]:
    """Canned transport: replays recorded {method -> result} JSON fixtures."""
    table = json.loads(Path(path).read_text())

    def transport(payload: dict) -> dict:
        return {"jsonrpc": "2.0", "id": payload["id"], "result": table[payload["method"]]}

    return transport
