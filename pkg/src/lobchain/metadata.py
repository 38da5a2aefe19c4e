"""Market metadata resolution with an on-disk cache.

The feed keys on condition id while the chain keys on ERC-1155 token ids;
the (condition_id, yes_token_id, no_token_id) mapping from the venue's REST
endpoint bridges the two. Builds must be reproducible offline from the
cache, so the fetcher is injectable and never required once cached.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import requests

DEFAULT_REST_BASE = "https://clob.polymarket.com"


@dataclass(frozen=True)
class MarketMeta:
    condition_id: str
    question: str
    end_date_iso: str
    closed: bool
    yes_token_id: str
    no_token_id: str


def rest_fetcher(base_url: str = DEFAULT_REST_BASE, timeout_s: float = 10.0,
                 ) -> Callable[[str], MarketMeta | None]:
    """Fetcher against the venue REST /markets/{conditionId} endpoint."""

    def fetch(condition_id: str) -> MarketMeta | None:
        resp = requests.get(f"{base_url}/markets/{condition_id}", timeout=timeout_s)
        if resp.status_code != 200:
            return None
        obj = resp.json()
        tokens = obj.get("tokens") or []
        yes = next((t for t in tokens if str(t.get("outcome", "")).lower() == "yes"), None)
        no = next((t for t in tokens if str(t.get("outcome", "")).lower() == "no"), None)
        if yes is None or no is None:
            return None
        return MarketMeta(
            condition_id=condition_id,
            question=str(obj.get("question", "")),
            end_date_iso=str(obj.get("end_date_iso", "")),
            closed=bool(obj.get("closed", False)),
            yes_token_id=str(yes["token_id"]),
            no_token_id=str(no["token_id"]),
        )

    return fetch


class MetadataCache:
    """JSON-file-backed cache of MarketMeta keyed by condition id."""

    def __init__(self, path=None, fetcher: Callable[[str], MarketMeta | None] | None = None):
        self.path = Path(path) if path is not None else None
        self.fetcher = fetcher
        self._records: dict[str, MarketMeta] = {}
        self._misses: set[str] = set()
        if self.path is not None and self.path.exists():
            for obj in json.loads(self.path.read_text()).values():
                meta = MarketMeta(**obj)
                self._records[meta.condition_id] = meta

    def __len__(self) -> int:
        return len(self._records)

    def put(self, meta: MarketMeta) -> None:
        self._records[meta.condition_id] = meta

    def get(self, condition_id: str) -> MarketMeta | None:
        meta = self._records.get(condition_id)
        if meta is None and condition_id not in self._misses and self.fetcher is not None:
            meta = self.fetcher(condition_id)
            if meta is None:
                self._misses.add(condition_id)
            else:
                self._records[condition_id] = meta
        return meta

    def save(self, path=None) -> None:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ValueError("no cache path configured")
        target.parent.mkdir(parents=True, exist_ok=True)
        payload = {cid: asdict(m) for cid, m in sorted(self._records.items())}
        target.write_text(json.dumps(payload, indent=1, sort_keys=True))

    def token_to_market(self) -> dict[str, str]:
        """token_id -> condition_id over every cached market."""
        table: dict[str, str] = {}
        for meta in self._records.values():
            table[meta.yes_token_id] = meta.condition_id
            table[meta.no_token_id] = meta.condition_id
        return table

    def markets(self) -> dict[str, MarketMeta]:
        return dict(self._records)
