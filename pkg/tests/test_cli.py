import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from lobchain.chain import OnChainFill, encode_order_filled
from lobchain.cli import main
from lobchain.manifest import load_manifest, sha256_file


def write_scenario(tmp_path, **kwargs):
    path = tmp_path / "scenario.json"
    base = {"seed": 77, "n_markets": 2, "n_trades": 400, "taker_rate": 4.0}
    base.update(kwargs)
    path.write_text(json.dumps(base))
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestPipeline:
    def test_simulate_infer_calibrate_manifest_chain(self, tmp_path):
        scenario = write_scenario(tmp_path)
        sim_dir = tmp_path / "sim"
        infer_dir = tmp_path / "infer"
        cal_dir = tmp_path / "cal"

        assert run("simulate", "--scenario", scenario, "--out-dir", sim_dir) == 0
        assert run("infer", "--archive", sim_dir / "archive", "--rule", "loose",
                   "--out-dir", infer_dir) == 0
        assert run("calibrate", "--inferred", infer_dir / "trades_loose.parquet",
                   "--onchain", sim_dir / "trades_onchain.parquet",
                   "--samples", sim_dir / "book_samples.parquet",
                   "--out-dir", cal_dir, "--bootstrap", "300") == 0
        compare = pd.read_parquet(cal_dir / "measures_compare.parquet")
        assert {"effective_half_inferred", "effective_half_onchain"} <= set(compare.columns)
        assert len(compare) == 2  # one row per market, sources side by side
        flips = json.loads((cal_dir / "flip_rates.json").read_text())
        assert "effective_half" in flips

        manifests = [load_manifest(d / "manifest.json")
                     for d in (sim_dir, infer_dir, cal_dir)]
        assert [m["command"] for m in manifests] == ["simulate", "infer", "calibrate"]
        # hash chain: infer consumed exactly what simulate produced
        sim_outputs = {e["path"]: e["sha256"] for e in manifests[0]["outputs"]}
        for entry in manifests[1]["inputs"]:
            assert sim_outputs[entry["path"]] == entry["sha256"]
        # and calibrate consumed infer + simulate artifacts
        cal_inputs = {Path(e["path"]).name for e in manifests[2]["inputs"]}
        assert {"trades_loose.parquet", "trades_onchain.parquet"} <= cal_inputs
        summary = json.loads((cal_dir / "agreement_summary.json").read_text())
        assert summary["mean"] == 1.0  # no churn: loose matches the chain exactly

    def test_measures_on_empty_trades_structured_error(self, tmp_path, capsys):
        empty = tmp_path / "empty.parquet"
        from lobchain.trades import empty_trade_frame
        empty_trade_frame().to_parquet(empty, index=False)
        samples = tmp_path / "samples.parquet"
        pd.DataFrame({"market_id": [], "ts": [], "mid": []}).to_parquet(samples)
        code = run("measures", "--trades", empty, "--samples", samples,
                   "--source", "onchain", "--out-dir", tmp_path / "out")
        assert code != 0
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "NoTrades"

    def test_end_to_end_determinism(self, tmp_path):
        scenario = write_scenario(tmp_path, n_trades=200)
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        for d in (dir_a, dir_b):
            assert run("simulate", "--scenario", scenario, "--out-dir", d) == 0
        for name in ("fills.parquet", "trades_onchain.parquet", "book_samples.parquet"):
            assert sha256_file(dir_a / name) == sha256_file(dir_b / name)
        archives_a = sorted((dir_a / "archive").glob("*.parquet"))
        archives_b = sorted((dir_b / "archive").glob("*.parquet"))
        assert [p.name for p in archives_a] == [p.name for p in archives_b]
        for pa, pb in zip(archives_a, archives_b):
            assert sha256_file(pa) == sha256_file(pb)

    def test_measures_command_produces_rows(self, tmp_path):
        scenario = write_scenario(tmp_path, n_trades=500, impact=1e-4,
                                  noise_sd=2e-4)
        sim_dir = tmp_path / "sim"
        out_dir = tmp_path / "meas"
        run("simulate", "--scenario", scenario, "--out-dir", sim_dir)
        assert run("measures", "--trades", sim_dir / "trades_onchain.parquet",
                   "--samples", sim_dir / "book_samples.parquet",
                   "--source", "onchain", "--out-dir", out_dir) == 0
        rows = pd.read_parquet(out_dir / "panel_trade_measures.parquet")
        assert len(rows) == 2
        assert np.isfinite(rows["effective_half"]).all()

    def test_infer_strict_rule(self, tmp_path):
        scenario = write_scenario(tmp_path, n_trades=300, cancel_replace_rate=0.2)
        sim_dir = tmp_path / "sim"
        out_dir = tmp_path / "strict"
        run("simulate", "--scenario", scenario, "--out-dir", sim_dir)
        assert run("infer", "--archive", sim_dir / "archive", "--rule", "strict",
                   "--lookback", "64", "--out-dir", out_dir) == 0
        strict = pd.read_parquet(out_dir / "trades_strict.parquet")
        assert (strict["source"] == "inferred_strict").all()

    def test_sf_command(self, tmp_path):
        scenario = write_scenario(tmp_path, n_trades=400, wash_rate=0.05)
        sim_dir = tmp_path / "sim"
        sf_dir = tmp_path / "sf"
        run("simulate", "--scenario", scenario, "--out-dir", sim_dir)
        assert run("sf", "--trades", sim_dir / "trades_onchain.parquet",
                   "--samples", sim_dir / "book_samples.parquet",
                   "--archive", sim_dir / "archive",
                   "--fact", "all", "--out-dir", sf_dir) == 0
        for name in ("sf1_longshot.csv", "sf2_depth_ratio.csv", "sf4_maker_hhi.csv",
                     "sf7_wash_share.csv"):
            assert (sf_dir / name).exists()

    def test_report_renders_csv(self, tmp_path):
        scenario = write_scenario(tmp_path, n_trades=100)
        sim_dir = tmp_path / "sim"
        run("simulate", "--scenario", scenario, "--out-dir", sim_dir)
        assert run("report", "--run-dir", sim_dir) == 0
        assert (sim_dir / "fills.csv").exists()

    def test_ingest_feed_command(self, tmp_path):
        scenario = write_scenario(tmp_path, n_trades=200)
        sim_dir = tmp_path / "sim"
        book_dir = tmp_path / "book"
        run("simulate", "--scenario", scenario, "--out-dir", sim_dir)
        assert run("ingest-feed", "--archive", sim_dir / "archive",
                   "--step", "30", "--out-dir", book_dir) == 0
        samples = pd.read_parquet(book_dir / "book_samples.parquet")
        assert not samples.empty
        assert samples["mid"].dropna().between(0, 1).all()


class _RpcHandler(BaseHTTPRequestHandler):
    logs = []
    head = 100_000

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        method = payload["method"]
        if method == "eth_blockNumber":
            result = hex(self.head)
        else:
            params = payload["params"][0]
            lo, hi = int(params["fromBlock"], 16), int(params["toBlock"], 16)
            result = [lg for lg in self.logs
                      if lo <= int(lg["blockNumber"], 16) <= hi]
        body = json.dumps({"jsonrpc": "2.0", "id": payload["id"],
                           "result": result}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class TestScrapeCli:
    def test_scrape_over_http(self, tmp_path):
        fills = [
            OnChainFill(tx_hash=f"0x{i:064x}", log_index=0,
                        order_hash=f"0x{i:064x}", maker="0x" + "11" * 20,
                        taker="0x" + "22" * 20, maker_asset_id=0,
                        taker_asset_id=9, maker_amount=10, taker_amount=20,
                        fee=0, block_number=100 * i)
            for i in range(30)
        ]
        _RpcHandler.logs = [encode_order_filled(f) for f in fills]
        server = HTTPServer(("127.0.0.1", 0), _RpcHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}"
            out_dir = tmp_path / "shards"
            assert run("scrape-fills", "--from-block", 0, "--to-block", 2999,
                       "--rpc-url", url, "--chunk-init", 1000,
                       "--out-dir", out_dir) == 0
            shards = sorted(out_dir.glob("fills_*.parquet"))
            frame = pd.concat([pd.read_parquet(p) for p in shards],
                              ignore_index=True)
            assert len(frame) == 30
        finally:
            server.shutdown()
