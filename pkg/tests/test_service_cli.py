import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from fastapi.testclient import TestClient

from ponzilens.cli import main as cli_main
from ponzilens.fixtures import FIXTURE_CHAIN, FIXTURE_WITHDRAW
from ponzilens.pipeline import analyze
from ponzilens.report import validate_report
from ponzilens.rpc import EmptyCodeError, RpcError, fetch_bytecode
from ponzilens.service import create_app


@pytest.fixture(autouse=True)
def _cache_isolation(tmp_path, monkeypatch):
    monkeypatch.setenv("PONZILENS_CACHE_DIR", str(tmp_path / "cache"))


# --- CLI --------------------------------------------------------------------------


def test_cli_analyze_inline(capsys):
    rc = cli_main(["analyze", "0x" + FIXTURE_WITHDRAW.hex(), "--no-cache"])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert validate_report(report) == []


def test_cli_analyze_file(tmp_path, capsys):
    hex_file = tmp_path / "chain.hex"
    hex_file.write_text(FIXTURE_CHAIN.hex())
    out_file = tmp_path / "report.json"
    rc = cli_main(["analyze", str(hex_file), "--out", str(out_file), "--no-cache"])
    assert rc == 0
    report = json.loads(out_file.read_text())
    assert report["contract"]["byte_length"] == len(FIXTURE_CHAIN)


def test_cli_disasm(capsys):
    rc = cli_main(["disasm", "0x6000"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert json.loads(lines[0]) == {"mnemonic": "PUSH1", "offset": 0, "operand_hex": "0x0"}


def test_cli_emit_cfg_dot(tmp_path, capsys):
    dot_file = tmp_path / "cfg.dot"
    rc = cli_main(["analyze", "0x" + FIXTURE_CHAIN.hex(), "--no-cache",
                   "--emit-cfg-dot", str(dot_file),
                   "--out", str(tmp_path / "r.json")])
    assert rc == 0
    assert dot_file.read_text().startswith("digraph")


def test_cli_dump_trace(capsys):
    rc = cli_main(["analyze", "0x" + FIXTURE_CHAIN.hex(), "--dump-trace", "p2"])
    assert rc == 0
    trace = json.loads(capsys.readouterr().out)
    assert trace["path"] == [0, 2, 3, 5, 3, 5, 3, 4]
    assert any(e["kind"] == "call_out" for e in trace["events"])


def test_cache_returns_byte_identical_reports(tmp_path):
    first = analyze(FIXTURE_CHAIN, cache_dir=tmp_path)
    second = analyze(FIXTURE_CHAIN, cache_dir=tmp_path)
    assert not first.from_cache and second.from_cache
    assert first.serialized == second.serialized


# --- service ----------------------------------------------------------------------


@pytest.fixture()
def client():
    return TestClient(create_app(workers=2))


def _wait_done(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        body = client.get(f"/analyses/{job_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.02)
    raise TimeoutError("job did not finish")


def test_service_post_then_report(client):
    resp = client.post("/analyses", json={
        "input": {"kind": "inline", "value": "0x" + FIXTURE_WITHDRAW.hex()},
        "limits": {"max_paths": 64, "max_blocks_per_path": 128},
    })
    assert resp.status_code == 202
    job_id = resp.json()["id"]
    status = _wait_done(client, job_id)
    assert status["status"] == "done", status
    report = client.get(f"/analyses/{job_id}/report").json()
    assert validate_report(report) == []


def test_service_unknown_job_404(client):
    assert client.get("/analyses/nope").status_code == 404
    assert client.get("/analyses/nope/report").status_code == 404


def test_service_report_not_ready_409(client):
    # a file input pointing nowhere fails the job; before that it is 409
    resp = client.post("/analyses", json={
        "input": {"kind": "inline", "value": "0x" + FIXTURE_CHAIN.hex()}})
    job_id = resp.json()["id"]
    codes = set()
    for _ in range(200):
        r = client.get(f"/analyses/{job_id}/report")
        codes.add(r.status_code)
        if r.status_code == 200:
            break
        time.sleep(0.01)
    assert 200 in codes


def test_service_bad_inline_400(client):
    resp = client.post("/analyses", json={"input": {"kind": "inline", "value": "0xzz"}})
    assert resp.status_code == 400


def test_service_column_order_roundtrip(client):
    resp = client.post("/analyses", json={
        "input": {"kind": "inline", "value": "0x" + FIXTURE_WITHDRAW.hex()}})
    job_id = resp.json()["id"]
    _wait_done(client, job_id)
    before = client.get(f"/analyses/{job_id}/report").json()["feature_level"]

    resp = client.post(f"/analyses/{job_id}/column-order", json={
        "columns": ["Rewarding", "Loop", "Payment", "Investing"]})
    assert resp.status_code == 200
    after = resp.json()
    assert after["columns"] == ["Rewarding", "Loop", "Payment", "Investing"]
    assert {g["id"]: sorted(g["path_ids"]) for g in after["groups"]} == \
        {g["id"]: sorted(g["path_ids"]) for g in before["groups"]}

    bad = client.post(f"/analyses/{job_id}/column-order", json={"columns": ["Nope"]})
    assert bad.status_code == 400


def test_service_schema_endpoint(client):
    body = client.get("/schema").json()
    assert body["title"] == "AnalysisReport"


def test_service_failed_job_surfaces_error(client):
    resp = client.post("/analyses", json={
        "input": {"kind": "file", "value": "/nonexistent/path.hex"}})
    status = _wait_done(client, resp.json()["id"])
    assert status["status"] == "failed"
    assert "error" in status


# --- RPC fetch ---------------------------------------------------------------------


class _FakeNode(BaseHTTPRequestHandler):
    code_by_address = {}
    error = None

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        req = json.loads(self.rfile.read(length))
        if self.error is not None:
            body = {"jsonrpc": "2.0", "id": req["id"], "error": self.error}
        else:
            addr = req["params"][0]
            body = {"jsonrpc": "2.0", "id": req["id"],
                    "result": self.code_by_address.get(addr, "0x")}
        data = json.dumps(body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def fake_node(tmp_path):
    _FakeNode.code_by_address = {
        "0x" + "11" * 20: "0x" + FIXTURE_WITHDRAW.hex(),
    }
    _FakeNode.error = None
    server = HTTPServer(("127.0.0.1", 0), _FakeNode)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", tmp_path
    server.shutdown()


def test_fetch_bytecode_replay(fake_node):
    endpoint, tmp_path = fake_node
    code = fetch_bytecode("0x" + "11" * 20, endpoint, cache_dir=tmp_path)
    assert code.data == FIXTURE_WITHDRAW
    assert code.source.kind.value == "rpc"
    # second fetch is served from the cache even if the server goes away
    again = fetch_bytecode("0x" + "11" * 20, endpoint, cache_dir=tmp_path)
    assert again.data == FIXTURE_WITHDRAW


def test_fetch_bytecode_empty_code(fake_node):
    endpoint, tmp_path = fake_node
    with pytest.raises(EmptyCodeError):
        fetch_bytecode("0x" + "22" * 20, endpoint, cache_dir=tmp_path)


def test_fetch_bytecode_rpc_error(fake_node):
    endpoint, tmp_path = fake_node
    _FakeNode.error = {"code": -32000, "message": "boom"}
    with pytest.raises(RpcError) as exc:
        fetch_bytecode("0x" + "33" * 20, endpoint, cache_dir=tmp_path)
    assert exc.value.code == -32000


def test_fetch_bytecode_malformed_address_no_network():
    # validation fires before any connection attempt: a bogus endpoint never hurts
    with pytest.raises(ValueError):
        fetch_bytecode("0x12", "http://127.0.0.1:1")


@pytest.mark.skipif("PONZILENS_LIVE_RPC" not in __import__("os").environ,
                    reason="live network check; set PONZILENS_LIVE_RPC to enable")
def test_fetch_bytecode_live():
    import os

    endpoint = os.environ["PONZILENS_LIVE_RPC"]
    code = fetch_bytecode("0xdAC17F958D2ee523a2206206994597C13D831ec7", endpoint,
                          use_cache=False)
    assert len(code.data) > 0
