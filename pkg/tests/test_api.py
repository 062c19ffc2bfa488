import json
import threading
import time
import urllib.error
import urllib.request

import pytest

from provtrail.api import create_server
from provtrail.capture import run_captured
from provtrail.fileview import create_view
from provtrail.monitor import MonitorSpec, register_monitor

from conftest import write


@pytest.fixture
def server(repo):
    srv = create_server(repo, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base, repo
    srv.shutdown()
    srv.server_close()


def request(base, path, method="GET", body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(
        base + path, data=data, method=method, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def test_graph_and_node(server):
    base, repo = server
    run_captured(repo, "touch seen.txt")
    status, doc = request(base, "/graph?kinds=Version,Snapshot&limit=50")
    assert status == 200
    kinds = {n["kind"] for n in doc["nodes"]}
    assert kinds <= {"Version", "Snapshot"}
    nid = doc["nodes"][0]["id"]
    status, node = request(base, f"/node/{nid}")
    assert status == 200 and node["id"] == nid


def test_node_404(server):
    base, _ = server
    status, body = request(base, "/node/99999")
    assert status == 404
    assert set(body) == {"status", "code", "message"}


def test_diff_identity(server):
    base, repo = server
    result = run_captured(repo, "sh -c 'echo x > f.txt'")
    sid = result.changed[0].snapshot_id
    status, doc = request(base, f"/diff?a={sid}&b={sid}")
    assert status == 200
    assert doc["changed"] == []
    assert "path" in doc["equal"]


def test_query_fig4b_shape(server):
    base, repo = server
    # two-model fixture built through real captures
    write(repo.root, "config.ini", "lr=0.1\n")
    run_captured(repo, "true")
    run_captured(repo, "sh -c 'printf \"Iteration 0, loss = 1.0\\n\" > model0.log' # config.ini")
    run_captured(repo, "sh -c 'printf \"Iteration 0, loss = 2.0\\n\" > model9.log' # config.ini")
    pattern = {
        "hops": [
            {"kind": "Snapshot", "props": {"path": {"op": "suffix", "value": ".log"}}},
            {"label": "PRODUCED", "direction": "in", "kind": "Derivation"},
            {"label": "USED", "direction": "out", "kind": "Snapshot",
             "props": {"path": "config.ini"}},
        ]
    }
    status, doc = request(base, "/query", method="POST", body=pattern)
    assert status == 200
    bindings = doc["bindings"]
    assert len(bindings) == 2
    shared = {b[-1] for b in bindings}
    assert len(shared) == 1  # both logs lead to the same config snapshot


def test_monitor_crud_and_alerts(server):
    base, repo = server
    status, created = request(
        base,
        "/monitors",
        method="POST",
        body={"target": "*.log", "key": "accuracy.last", "condition": {"op": "<", "value": 0.5}},
    )
    assert status == 200
    mid = created["id"]
    status, listed = request(base, "/monitors")
    assert [m["id"] for m in listed["monitors"]] == [mid]
    run_captured(repo, "sh -c 'printf \"Iteration 0, accuracy = 0.1\\n\" > t.log'")
    status, alerts = request(base, "/alerts")
    assert len(alerts["alerts"]) == 1
    status, _ = request(base, f"/monitors/{mid}", method="DELETE")
    assert status == 200
    status, listed = request(base, "/monitors")
    assert listed["monitors"] == []


def test_annotate_roundtrip(server):
    base, repo = server
    result = run_captured(repo, "touch noted.txt")
    sid = result.changed[0].snapshot_id
    status, _ = request(
        base, "/annotate", method="POST", body={"node": sid, "key": "purpose", "value": "demo"}
    )
    assert status == 200
    status, node = request(base, f"/node/{sid}")
    assert node["properties"]["purpose"]["value"] == {"t": "str", "v": "demo"}
    assert node["properties"]["purpose"]["source"] == "user"


def test_fileviews_create_and_materialize(server):
    base, repo = server
    write(repo.root, "in.csv", "1,a\n2,b\n")
    run_captured(repo, "true")
    status, created = request(
        base,
        "/fileviews",
        method="POST",
        body={"name": "out.csv", "sql": "select i._c1 from {in.csv} as i", "mode": "materialized"},
    )
    assert status == 200
    status, done = request(base, "/fileviews", method="POST",
                           body={"name": "out.csv", "materialize": True})
    assert status == 200
    assert (repo.root / "out.csv").read_text() == "a\nb\n"
    status, listed = request(base, "/fileviews")
    assert "out.csv" in listed["fileviews"]


def test_gridrun(server):
    base, repo = server
    baseline = run_captured(repo, "sh -c 'echo P > gridout.txt'")
    status, doc = request(
        base,
        "/gridrun",
        method="POST",
        body={
            "derivation": baseline.derivation_id,
            "params": [{"key": "P", "start": 1, "stop": 3, "step": 1}],
        },
    )
    assert status == 200
    assert len(doc["runs"]) == 3
    assert doc["runs"][-1]["cmdline"] == "sh -c 'echo 3 > gridout.txt'"


def test_gridrun_http_cap(server):
    base, repo = server
    baseline = run_captured(repo, "sh -c 'echo P > gridout.txt'")
    status, body = request(
        base,
        "/gridrun",
        method="POST",
        body={
            "derivation": baseline.derivation_id,
            "params": [{"key": "P", "start": 1, "stop": 64, "step": 1}],
        },
    )
    assert status == 400
    assert "cap" in body["message"]


def test_artifacts_filter(server):
    base, repo = server
    run_captured(repo, "touch analyze.py")
    run_captured(repo, "touch data.csv")
    status, doc = request(base, "/artifacts?tag=script")
    assert status == 200
    assert [a["path"] for a in doc["artifacts"]] == ["analyze.py"]


def test_mutations_rejected_while_lock_held(server):
    base, repo = server
    lock_path = repo.meta / "lock"
    lock_path.write_text("1")  # simulate a foreign process holding the lock
    try:
        status, body = request(
            base,
            "/monitors",
            method="POST",
            body={"target": "*", "key": "k", "condition": {"op": "<", "value": 1}},
        )
        assert status == 409
        assert body["code"] == "lock-busy"
    finally:
        lock_path.unlink()


def test_malformed_body_400(server):
    base, _ = server
    req = urllib.request.Request(
        base + "/query", data=b"{not json", method="POST",
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            status = resp.status
    except urllib.error.HTTPError as err:
        status = err.code
        body = json.loads(err.read())
        assert body["code"] in ("malformed-body", "bad-request")
    assert status == 400


def test_timeseries_endpoint(server):
    base, repo = server
    for acc in ("0.2", "0.8"):
        run_captured(repo, f"sh -c 'printf \"Iteration 0, accuracy = {acc}\\n\" > t.log'")
    status, doc = request(base, "/timeseries?artifact=t.log&key=accuracy.last")
    assert status == 200
    values = [v["v"] for _, v in doc["points"]]
    assert values == [0.2, 0.8]
