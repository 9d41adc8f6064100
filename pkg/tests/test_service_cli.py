import csv
import json
import threading

import numpy as np
import pytest

from streamreg.cli import main
from streamreg.service import (ServiceClient, ServiceConfig, StreamRegistry,
                               StreamService, handle_request)


@pytest.fixture
def registry():
    return StreamRegistry(ServiceConfig(known_uniform_density=True))


def ingest_points(registry, stream_id, n, seed=0, fn=np.sin):
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0, 1, n)
    points = [[float(t), float(fn(t))] for t in ts]
    return handle_request(registry, {"op": "ingest", "stream_id": stream_id,
                                     "points": points})


class TestRegistry:
    def test_ingest_then_stats(self, registry):
        resp = ingest_points(registry, "a", 50)
        assert resp == {"ok": True, "n": 50}
        stats = handle_request(registry, {"op": "query", "stream_id": "a",
                                          "kind": "stats"})
        assert stats["ok"] and stats["n"] == 50
        assert stats["q_active"] >= 1
        assert stats["memory_units"] > 0

    def test_streams_are_isolated(self, registry):
        ingest_points(registry, "a", 30)
        ingest_points(registry, "b", 70)
        sa = handle_request(registry, {"op": "query", "stream_id": "a",
                                       "kind": "stats"})
        sb = handle_request(registry, {"op": "query", "stream_id": "b",
                                       "kind": "stats"})
        assert (sa["n"], sb["n"]) == (30, 70)

    def test_estimate_query(self, registry):
        ingest_points(registry, "a", 2000, fn=lambda t: 3.0 + 0 * t)
        resp = handle_request(registry, {"op": "query", "stream_id": "a",
                                         "kind": "estimate", "t": 0.5})
        assert resp["ok"]
        assert resp["value"] == pytest.approx(3.0, abs=0.2)

    def test_density_query_known_uniform(self, registry):
        ingest_points(registry, "a", 100)
        resp = handle_request(registry, {"op": "query", "stream_id": "a",
                                         "kind": "density", "t": 0.3})
        assert resp == {"ok": True, "value": 1.0}

    def test_error_kinds(self, registry):
        missing = handle_request(registry, {"op": "query", "stream_id": "x",
                                            "kind": "stats"})
        assert (missing["ok"], missing["error"]) == (False, "not_found")
        bad = handle_request(registry, {"op": "ingest", "stream_id": "a",
                                        "points": [[2.5, 1.0]]})
        assert bad["error"] == "validation"
        unknown = handle_request(registry, {"op": "frobnicate"})
        assert unknown["error"] == "request"
        no_t = handle_request(registry, {"op": "ingest", "stream_id": "a",
                                         "points": [[0.5, 1.0]]})
        assert no_t["ok"]
        resp = handle_request(registry, {"op": "query", "stream_id": "a",
                                         "kind": "estimate"})
        assert resp["error"] == "request"

    def test_concurrent_ingest_is_consistent(self, registry):
        def worker(seed):
            ingest_points(registry, "shared", 200, seed=seed)

        threads = [threading.Thread(target=worker, args=(s,)) for s in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        stats = handle_request(registry, {"op": "query", "stream_id": "shared",
                                          "kind": "stats"})
        assert stats["n"] == 800


class TestSocketService:
    def test_round_trip_over_tcp(self):
        server = StreamService(ServiceConfig(known_uniform_density=True))
        server.serve_background()
        try:
            host, port = server.address
            client = ServiceClient(host, port)
            resp = client.request(op="ingest", stream_id="s",
                                  points=[[0.1, 1.0], [0.9, 1.0]])
            assert resp == {"ok": True, "n": 2}
            stats = client.request(op="query", stream_id="s", kind="stats")
            assert stats["n"] == 2
            client.close()
        finally:
            server.shutdown()
            server.server_close()

    def test_malformed_line_reports_error(self):
        server = StreamService(ServiceConfig())
        server.serve_background()
        try:
            import socket
            host, port = server.address
            with socket.create_connection((host, port)) as sock:
                fh = sock.makefile("rwb")
                fh.write(b"this is not json\n")
                fh.flush()
                resp = json.loads(fh.readline())
            assert resp["ok"] is False and resp["error"] == "request"
        finally:
            server.shutdown()
            server.server_close()


def write_stream_csv(path, n=600, seed=0):
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0, 1, n)
    ys = np.sin(2 * np.pi * ts) + rng.normal(0, 0.1, n)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for t, y in zip(ts, ys):
            writer.writerow([repr(float(t)), repr(float(y))])
    return ts, ys


class TestCli:
    def test_usage_errors(self, capsys):
        assert main([]) == 2
        assert main(["simulate", "--target", "m9"]) == 2
        capsys.readouterr()

    def test_ingest_query_pipeline(self, tmp_path, capsys):
        data = tmp_path / "stream.csv"
        ckpt = tmp_path / "state.json"
        out = tmp_path / "fit.csv"
        write_stream_csv(data)
        assert main(["ingest-csv", "--input", str(data),
                     "--checkpoint", str(ckpt)]) == 0
        assert json.loads(ckpt.read_text())["n"] == 600
        assert main(["query", "--checkpoint", str(ckpt), "--grid", "11",
                     "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 11
        assert all(np.isfinite(float(r["estimate"])) for r in rows)
        capsys.readouterr()

    def test_query_output_is_deterministic(self, tmp_path, capsys):
        data = tmp_path / "stream.csv"
        ckpt = tmp_path / "state.json"
        write_stream_csv(data)
        main(["ingest-csv", "--input", str(data), "--checkpoint", str(ckpt)])
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["query", "--checkpoint", str(ckpt), "--out", str(out1)])
        main(["query", "--checkpoint", str(ckpt), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()
        capsys.readouterr()

    def test_resume_matches_single_pass(self, tmp_path, capsys):
        rng = np.random.default_rng(42)
        ts = rng.uniform(0, 1, 400)
        ys = ts ** 2

        def dump(path, idx):
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "y"])
                for i in idx:
                    w.writerow([repr(float(ts[i])), repr(float(ys[i]))])

        full_csv, a_csv, b_csv = (tmp_path / f"{s}.csv" for s in "fab")
        dump(full_csv, range(400))
        dump(a_csv, range(200))
        dump(b_csv, range(200, 400))
        full_ck, part_ck = tmp_path / "full.json", tmp_path / "part.json"
        main(["ingest-csv", "--input", str(full_csv),
              "--checkpoint", str(full_ck)])
        main(["ingest-csv", "--input", str(a_csv),
              "--checkpoint", str(part_ck)])
        main(["ingest-csv", "--input", str(b_csv), "--resume", str(part_ck),
              "--checkpoint", str(part_ck)])
        assert full_ck.read_text() == part_ck.read_text()
        capsys.readouterr()

    def test_bad_header_fails(self, tmp_path, capsys):
        data = tmp_path / "bad.csv"
        data.write_text("x,y\n0.1,2.0\n")
        code = main(["ingest-csv", "--input", str(data),
                     "--checkpoint", str(tmp_path / "c.json")])
        assert code == 1
        capsys.readouterr()

    def test_protocol_command(self, tmp_path, capsys):
        out = tmp_path / "protocol.csv"
        code = main(["protocol", "--k", "2", "--n", "2000", "--trials", "2",
                     "--out", str(out)])
        assert code == 0
        assert "per-bit error rate" in capsys.readouterr().out
        assert out.exists()

    def test_tune_command(self, tmp_path, capsys):
        out = tmp_path / "tuning.csv"
        code = main(["tune", "--target", "m1", "--n", "1000",
                     "--n0", "500", "--out", str(out)])
        assert code == 0
        assert "selected C_rho" in capsys.readouterr().out
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert sum(int(r["selected"]) for r in rows) == 1

    def test_simulate_command(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        code = main(["simulate", "--target", "m1", "--n", "1000",
                     "--replicates", "2", "--checkpoints", "1000",
                     "--out", str(out)])
        assert code == 0
        assert out.exists() and (tmp_path / "report.csv.gp").exists()
        capsys.readouterr()
