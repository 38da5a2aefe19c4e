"""Command-line entry point.

Subcommands: simulate, ingest-feed, scrape-fills, build-panel, infer,
measures, calibrate, sf, report. Each run writes versioned artifacts plus a
manifest (effective config, input/output hashes, code version, wall time).
Configuration lives in one JSON file; flags override file values; the
effective config is embedded in the manifest. Module errors exit non-zero
with a structured JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import archive as arch
from . import calibrate as cal
from . import feed, inference, measures, panel, rpc, stylized
from .errors import LobchainError, NoTrades
from .manifest import RunManifest
from .metadata import MetadataCache
from .synth import ScenarioConfig, generate
from .trades import SOURCE_LOOSE, SOURCE_ONCHAIN, SOURCE_STRICT, trades_from_fills

_SOURCES = {"onchain": SOURCE_ONCHAIN, "loose": SOURCE_LOOSE, "strict": SOURCE_STRICT}


def _effective_config(args: argparse.Namespace) -> dict:
    """File config overlaid with explicitly provided flags."""
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(json.loads(Path(args.config).read_text()))
    for key, value in vars(args).items():
        if key in ("func", "config") or value is None:
            continue
        cfg[key] = value
    return cfg


def _write(frame: pd.DataFrame, out_dir: Path, name: str, manifest: RunManifest) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    frame.to_parquet(path, index=False)
    manifest.add_output(path)
    return path


def _load_trades(path, source: str | None = None) -> pd.DataFrame:
    frame = pd.read_parquet(path)
    if source is not None:
        frame = frame[frame["source"] == source].reset_index(drop=True)
    return frame


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    scenario_path = args.scenario or args.config
    scenario_kwargs = json.loads(Path(scenario_path).read_text()) if scenario_path else {}
    if args.seed is not None:
        scenario_kwargs["seed"] = args.seed
    scfg = ScenarioConfig(**scenario_kwargs)
    scfg.validate()
    manifest = RunManifest("simulate", {**cfg, "scenario": vars(scfg) | {}})
    if scenario_path:
        manifest.add_input(scenario_path)
    scenario = generate(scfg)

    _write(scenario.fills_frame(), out_dir, "fills.parquet", manifest)
    _write(scenario.trades_frame(), out_dir, "trades_onchain.parquet", manifest)
    events = []
    truth = []
    for market in scenario.markets:
        for i, (ev, label) in enumerate(market.feed_events(with_labels=True)):
            events.append(ev)
            truth.append({"market_id": market.market_id, "event_index": i,
                          "kind": ev.kind, "label": label})
    for path in arch.write_hourly(arch.events_to_frame(events), out_dir / "archive"):
        manifest.add_output(path)
    _write(pd.DataFrame(truth), out_dir, "truth_feed.parquet", manifest)
    samples = pd.concat([m.book_samples(args.step) for m in scenario.markets],
                        ignore_index=True)
    _write(samples, out_dir, "book_samples.parquet", manifest)
    token_map = pd.DataFrame(sorted(scenario.token_map().items()),
                             columns=["token_id", "market_id"])
    _write(token_map, out_dir, "token_map.parquet", manifest)
    manifest.write(out_dir)
    return 0


def cmd_ingest_feed(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("ingest-feed", cfg)
    src = Path(args.archive)
    paths = sorted(src.glob("feed_*.parquet")) if src.is_dir() else [src]
    for p in paths:
        manifest.add_input(p)
    rows = arch.read_archive(paths)
    samples = pd.DataFrame(columns=feed.SAMPLE_COLUMNS)
    if not rows.empty:
        # replay per market so arrival order within a book is preserved
        per_market = [
            feed.sample_books(arch.frame_to_events(grp), args.step)
            for _, grp in rows.groupby(["market_id", "token_id"], sort=True)
        ]
        samples = pd.concat(per_market, ignore_index=True)
    _write(samples, out_dir, "book_samples.parquet", manifest)
    manifest.write(out_dir)
    return 0


def cmd_scrape_fills(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("scrape-fills", cfg)
    client = rpc.RpcClient(args.rpc_url)
    anchor = None
    if args.anchor_block is not None and args.anchor_ts is not None:
        anchor = (args.anchor_block, args.anchor_ts)
    policy = rpc.ChunkPolicy(init=args.chunk_init)
    report = rpc.scrape_fills(
        client, args.from_block, args.to_block, out_dir,
        chunk=policy, resume=args.resume, anchor=anchor, slope=args.slope,
    )
    for shard in report.shards:
        manifest.add_output(out_dir / shard)
    manifest.config["scrape_report"] = {
        "n_logs": report.n_logs, "n_duplicates": report.n_duplicates,
        "n_requests": report.n_requests, "n_halvings": report.n_halvings,
        "skipped_shards": report.skipped_shards,
    }
    manifest.write(out_dir)
    return 0


def cmd_build_panel(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("build-panel", cfg)
    manifest.add_input(args.trades)
    trades = _load_trades(args.trades)
    if trades.empty:
        raise NoTrades("no trades to rank markets by")
    volumes, counts = panel.volumes_from_trades(trades)
    cache = MetadataCache(args.metadata_cache)
    manifest.add_input(args.metadata_cache)
    spec = panel.PanelSpec(top_n=args.top, random_n=args.random,
                           min_trades=args.min_trades, seed=args.seed)
    build = panel.build_panel(volumes, counts, cache.get, spec)
    _write(build.frame, out_dir, "panel.parquet", manifest)
    manifest.config["panel_sha256"] = build.content_hash
    manifest.config["metadata_misses"] = build.n_metadata_misses
    manifest.write(out_dir)
    print(build.content_hash)
    return 0


def cmd_infer(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("infer", cfg)
    src = Path(args.archive)
    paths = sorted(src.glob("feed_*.parquet")) if src.is_dir() else [src]
    for p in paths:
        manifest.add_input(p)
    rows = arch.read_archive(paths)
    frames = []
    for _, grp in rows.groupby(["market_id", "token_id"], sort=True):
        events = arch.frame_to_events(grp)
        if args.rule == "loose":
            frames.append(inference.infer_loose(events))
        else:
            frames.append(inference.infer_strict(events, lookback=args.lookback))
    merged = pd.concat(frames, ignore_index=True) if frames else inference._to_frame([])
    _write(merged, out_dir, f"trades_{args.rule}.parquet", manifest)
    manifest.write(out_dir)
    return 0


def cmd_measures(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("measures", cfg)
    manifest.add_input(args.trades)
    manifest.add_input(args.samples)
    source = _SOURCES[args.source]
    trades = _load_trades(args.trades, source)
    if trades.empty:
        raise NoTrades(f"no trades with source {source!r} in {args.trades}")
    samples = pd.read_parquet(args.samples)
    rows = []
    for market_id, market_trades in trades.groupby("market_id", sort=True):
        market_samples = samples[samples["market_id"] == market_id]
        if market_samples.empty:
            continue
        mids = measures.MidSeries.from_samples(market_samples, args.step)
        rows.append(measures.compute_measure_row(
            market_trades, mids, market_id, source, step=args.step, lag=args.lag))
    frame = measures.measure_rows_frame(rows)
    _write(frame, out_dir, "panel_trade_measures.parquet", manifest)
    manifest.write(out_dir)
    return 0


def _parse_windows(spec: str | None) -> list[tuple[float, float]]:
    if not spec:
        return []
    windows = []
    for chunk in spec.split(","):
        lo, hi = chunk.split(":")
        windows.append((float(lo), float(hi)))
    return windows


def cmd_calibrate(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("calibrate", cfg)
    manifest.add_input(args.inferred)
    manifest.add_input(args.onchain)
    inferred = _load_trades(args.inferred)
    onchain = _load_trades(args.onchain)
    windows = _parse_windows(args.windows) or [(-np.inf, np.inf)]
    cells = []
    for w, (lo, hi) in enumerate(windows):
        matched = cal.bucket_match(inferred, onchain, window=(lo, hi))
        cells.append(cal.agreement_cells(matched, window_id=f"w{w}",
                                         min_buckets=args.min_buckets))
    cell_frame = pd.concat(cells, ignore_index=True) if cells else pd.DataFrame()
    _write(cell_frame, out_dir, "agreement_cells.parquet", manifest)
    summary = {}
    if not cell_frame.empty:
        stats = cal.sign_agreement(cell_frame)
        weighted = cal.sign_agreement(cell_frame, weights="buckets")
        usable = cell_frame.dropna(subset=["agreement"])
        ci = None
        if usable["market_id"].nunique() >= 2:
            ci = cal.clustered_bootstrap_ci(
                usable["agreement"].to_numpy(), usable["market_id"].to_numpy(),
                b=args.bootstrap, seed=args.seed)
        summary = {
            "mean": stats.mean, "median": stats.median, "iqr": list(stats.iqr),
            "mean_bucket_weighted": weighted.mean,
            "n_cells": stats.n_cells, "n_buckets": stats.n_buckets,
            "bootstrap_ci": list(ci) if ci else None,
        }
    path = out_dir / "agreement_summary.json"
    path.write_text(json.dumps(summary, indent=1))
    manifest.add_output(path)
    if args.samples:
        manifest.add_input(args.samples)
        samples = pd.read_parquet(args.samples)
        compare = _measures_compare(inferred, onchain, samples, args.step)
        _write(compare, out_dir, "measures_compare.parquet", manifest)
        flips = {}
        left = compare.rename(columns=lambda c: c.removesuffix("_inferred"))
        right = compare.rename(columns=lambda c: c.removesuffix("_onchain"))
        for name in measures.MEASURE_NAMES:
            try:
                res = cal.sign_flip_rate(left, right, name)
            except LobchainError:
                continue
            flips[name] = {"rate": res.rate, "n_flips": res.n_flips,
                           "n_comparable": res.n_comparable,
                           "wilson": list(res.wilson)}
        flip_path = out_dir / "flip_rates.json"
        flip_path.write_text(json.dumps(flips, indent=1))
        manifest.add_output(flip_path)
    manifest.write(out_dir)
    return 0


def _measures_compare(inferred: pd.DataFrame, onchain: pd.DataFrame,
                      samples: pd.DataFrame, step: float) -> pd.DataFrame:
    """Side-by-side per-market measure columns for the two trade sources."""
    sides = {}
    for tag, trades in (("inferred", inferred), ("onchain", onchain)):
        rows = []
        for market_id, market_trades in trades.groupby("market_id", sort=True):
            market_samples = samples[samples["market_id"] == market_id]
            if market_samples.empty:
                continue
            mids = measures.MidSeries.from_samples(market_samples, step)
            rows.append(measures.compute_measure_row(
                market_trades, mids, market_id, tag, step=step))
        frame = measures.measure_rows_frame(rows).set_index("market_id")
        frame = frame.drop(columns=["source", "sample_step"])
        sides[tag] = frame.add_suffix(f"_{tag}")
    return sides["inferred"].join(sides["onchain"], how="inner").reset_index()


def _parse_midpoint(text: str) -> float:
    return datetime.fromisoformat(text.replace("Z", "+00:00")).timestamp()


def cmd_sf(args) -> int:
    cfg = _effective_config(args)
    out_dir = Path(args.out_dir)
    manifest = RunManifest("sf", cfg)
    manifest.add_input(args.trades)
    manifest.add_input(args.samples)
    trades = _load_trades(args.trades, SOURCE_ONCHAIN)
    samples = pd.read_parquet(args.samples)
    archive_rows = arch.read_archive(args.archive) if args.archive else pd.DataFrame()
    cache = MetadataCache(args.metadata_cache) if args.metadata_cache else None
    midpoint = _parse_midpoint(args.midpoint) if args.midpoint else None

    summaries = build_summaries(trades, samples, archive_rows, cache, midpoint)
    _write(stylized.summaries_frame(summaries), out_dir, "market_summaries.parquet",
           manifest)
    frame = stylized.summaries_frame(summaries)
    facts = args.fact.split(",") if args.fact != "all" else [f"sf{i}" for i in range(1, 9)]
    for fact in facts:
        out = _compute_fact(fact, frame, trades)
        if out is not None:
            table, csv_name = out
            path = out_dir / csv_name
            table.to_csv(path, index=False)
            manifest.add_output(path)
    manifest.write(out_dir)
    return 0


def _compute_fact(fact: str, summaries: pd.DataFrame, trades: pd.DataFrame):
    if fact == "sf1":
        return stylized.sf1_longshot(summaries), "sf1_longshot.csv"
    if fact == "sf2":
        ratios, stats = stylized.sf2_depth_ratio(summaries)
        table = ratios.copy()
        for key, val in stats.items():
            table[key] = val
        return table, "sf2_depth_ratio.csv"
    if fact == "sf3":
        cols = ["market_id", "block_align_share", "block_align_pvalue"]
        return summaries[cols], "sf3_block_alignment.csv"
    if fact == "sf4":
        return summaries[["market_id", "maker_hhi"]], "sf4_maker_hhi.csv"
    if fact == "sf5":
        return stylized.sf5_category_table(summaries, "median_quoted_half_bps"), \
            "sf5_category.csv"
    if fact == "sf6":
        cols = ["market_id", "latency_p50", "latency_p90", "latency_p99"]
        return summaries[cols], "sf6_latency.csv"
    if fact == "sf7":
        return summaries[["market_id", "wash_share", "wash_share_count"]], \
            "sf7_wash_share.csv"
    if fact == "sf8":
        rows = []
        for spec in stylized.SF8_SPECS:
            try:
                rows.append(stylized.sf8_depth_decay(summaries, spec))
            except LobchainError:
                continue
        return pd.DataFrame(rows), "sf8_depth_decay.csv"
    return None


def build_summaries(trades: pd.DataFrame, samples: pd.DataFrame,
                    archive_rows: pd.DataFrame, cache: MetadataCache | None,
                    midpoint: float | None) -> list[stylized.MarketSummary]:
    """Assemble per-market summaries from the raw inputs that exist."""
    summaries = []
    markets = sorted(set(samples["market_id"]) | set(trades["market_id"]))
    for market_id in markets:
        s = stylized.MarketSummary(market_id=market_id)
        rows = samples[samples["market_id"] == market_id]
        mid = rows["mid"].to_numpy(dtype=float) if not rows.empty else np.array([])
        mid = mid[np.isfinite(mid)]
        if mid.size:
            s.mean_mid = float(mid.mean())
            spread = rows["quoted_half_bps"].to_numpy(dtype=float)
            spread = spread[np.isfinite(spread)]
            if spread.size:
                s.median_quoted_half_bps = float(np.median(spread))
            d10 = rows["depth_bid_l10"].to_numpy(dtype=float) + \
                rows["depth_ask_l10"].to_numpy(dtype=float)
            d1 = rows["depth_bid_l1"].to_numpy(dtype=float) + \
                rows["depth_ask_l1"].to_numpy(dtype=float)
            ok = np.isfinite(d10) & np.isfinite(d1)
            if ok.any():
                s.depth_l1 = float(d1[ok].mean())
                s.depth_l10 = float(d10[ok].mean())
                s.mean_depth_l10 = s.depth_l10
        market_trades = trades[trades["market_id"] == market_id]
        if not market_trades.empty:
            s.usdc_volume = float(market_trades["size_usdc"].sum())
            s.n_trades = int(len(market_trades))
            try:
                s.maker_hhi = stylized.sf4_maker_hhi(market_trades)
            except LobchainError:
                pass
            try:
                wash = stylized.sf7_wash_share(market_trades)
                s.wash_share = wash["share_volume"]
                s.wash_share_count = wash["share_count"]
            except LobchainError:
                pass
        if not archive_rows.empty:
            ev = archive_rows[archive_rows["market_id"] == market_id]
            if not ev.empty:
                recv = ev["timestamp_received"].to_numpy(dtype=float)
                crea = ev["timestamp_created_at"].to_numpy(dtype=float)
                try:
                    share, pvalue = stylized.sf3_block_alignment(recv)
                    s.block_align_share = share
                    s.block_align_pvalue = pvalue
                    lat = stylized.sf6_latency(recv, crea)
                    s.latency_p50 = lat["p50"]
                    s.latency_p90 = lat["p90"]
                    s.latency_p99 = lat["p99"]
                except LobchainError:
                    pass
        if cache is not None:
            meta = cache.get(market_id)
            if meta is not None:
                s.category = stylized.sf5_categorize(meta.question)
                if midpoint is not None and meta.end_date_iso:
                    end = _parse_midpoint(meta.end_date_iso)
                    s.seconds_to_close = end - midpoint
        summaries.append(s)
    return summaries


def cmd_report(args) -> int:
    cfg = _effective_config(args)
    run_dir = Path(args.run_dir)
    manifest = RunManifest("report", cfg)
    written = []
    for parquet in sorted(run_dir.glob("**/*.parquet")):
        csv_path = parquet.with_suffix(".csv")
        pd.read_parquet(parquet).to_csv(csv_path, index=False)
        manifest.add_input(parquet)
        manifest.add_output(csv_path)
        written.append(csv_path)
    manifest.write(run_dir, name="report_manifest.json")
    print(f"rendered {len(written)} csv files")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobchain")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic venue scenario")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--scenario", help="alias for --config")
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float, default=60.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest-feed", help="replay an archive into book samples")
    p.add_argument("--archive", required=True)
    p.add_argument("--config")
    p.add_argument("--step", type=float, default=60.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ingest_feed)

    p = sub.add_parser("scrape-fills", help="scrape OrderFilled logs over JSON-RPC")
    p.add_argument("--from-block", type=int, required=True)
    p.add_argument("--to-block", type=int, required=True)
    p.add_argument("--rpc-url", required=True)
    p.add_argument("--chunk-init", type=int, default=2000)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--anchor-block", type=int)
    p.add_argument("--anchor-ts", type=float)
    p.add_argument("--slope", type=float, default=2.0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_scrape_fills)

    p = sub.add_parser("build-panel", help="build the stratified market panel")
    p.add_argument("--trades", required=True)
    p.add_argument("--metadata-cache", required=True)
    p.add_argument("--seed", type=int, default=20260424)
    p.add_argument("--top", type=int, default=100)
    p.add_argument("--random", type=int, default=500)
    p.add_argument("--min-trades", type=int, default=100)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_build_panel)

    p = sub.add_parser("infer", help="infer trades from the feed")
    p.add_argument("--archive", required=True)
    p.add_argument("--rule", choices=["loose", "strict"], default="loose")
    p.add_argument("--lookback", type=int, default=inference.DEFAULT_LOOKBACK)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("measures", help="compute per-market measure rows")
    p.add_argument("--trades", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--source", choices=sorted(_SOURCES), default="onchain")
    p.add_argument("--step", type=float, default=60.0)
    p.add_argument("--lag", type=float, default=60.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_measures)

    p = sub.add_parser("calibrate", help="match inferred vs on-chain trades")
    p.add_argument("--inferred", required=True)
    p.add_argument("--onchain", required=True)
    p.add_argument("--samples", help="book samples; enables measures_compare output")
    p.add_argument("--windows", help="comma-separated start:end seconds")
    p.add_argument("--min-buckets", type=int, default=cal.MIN_MATCHED_BUCKETS)
    p.add_argument("--bootstrap", type=int, default=cal.DEFAULT_BOOTSTRAP)
    p.add_argument("--step", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sf", help="compute stylized-fact tables")
    p.add_argument("action", nargs="?", choices=["run"], default="run")
    p.add_argument("--trades", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--archive")
    p.add_argument("--metadata-cache")
    p.add_argument("--midpoint", help="panel window midpoint ISO timestamp")
    p.add_argument("--fact", default="all")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_sf)

    p = sub.add_parser("report", help="render figure-ready CSVs for a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LobchainError as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
