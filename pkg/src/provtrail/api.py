"""Local HTTP/JSON service over a repository.

Read endpoints replay any log records appended by other processes before
answering, so a long-running server stays consistent with CLI activity.
Mutating endpoints acquire the repository writer lock with a near-zero
timeout and answer 409 while a capture holds it; they are never queued.
Binds to loopback by default; no authentication (single-user local tool).
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import capture, fileview, monitor, querydiff
from .errors import (
    EvaluationError,
    GridCapError,
    LockTimeoutError,
    MonitorError,
    NameCollisionError,
    NoCommonAncestorError,
    NoPathError,
    PatternError,
    ProvTrailError,
    RecursionGuardError,
    SqlParseError,
    TemplateError,
    UnknownArtifactError,
    UnknownNodeError,
    UnknownViewError,
)
from .ingest import annotate, decode_json_value
from .props import to_tagged
from .repo import Repository

HTTP_GRID_CAP = 32
MUTATION_LOCK_TIMEOUT = 0.05
_ALREADY_SENT = object()


class ApiError(Exception):
    def __init__(self, status, code, message):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def body(self):
        return {"status": self.status, "code": self.code, "message": self.message}


def node_json(node):
    return {
        "id": node.id,
        "kind": node.kind,
        "properties": {
            key: {"value": to_tagged(prop.value), "source": prop.source}
            for key, prop in sorted(node.properties.items())
        },
    }


def _int_param(params, name, default=None):
    raw = params.get(name, [None])[0]
    if raw is None or raw == "":
        if default is not None:
            return default
        raise ApiError(400, "missing-param", f"query parameter {name!r} is required")
    try:
        return int(raw)
    except ValueError:
        raise ApiError(400, "bad-param", f"{name} must be an integer, got {raw!r}") from None


class Handler(BaseHTTPRequestHandler):
    server_version = "provtrail"
    protocol_version = "HTTP/1.1"

    # ------------------------------------------------------------------
    def log_message(self, fmt, *args):
        if self.server.verbose:
            super().log_message(fmt, *args)

    def _send(self, status, payload, content_type="application/json"):
        body = json.dumps(payload).encode("utf-8") if content_type == "application/json" else payload
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            return json.loads(raw)
        except ValueError:
            raise ApiError(400, "malformed-body", "request body is not valid JSON") from None

    def do_OPTIONS(self):
        self._send(200, {})

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_DELETE(self):
        self._route("DELETE")

    def _route(self, method):
        url = urlparse(self.path)
        params = parse_qs(url.query)
        try:
            with self.server.op_lock:
                self.server.repo.graph.refresh()
                payload = self._dispatch(method, url.path, params)
            if payload is not _ALREADY_SENT:
                self._send(200, payload)
        except ApiError as err:
            self._send(err.status, err.body())
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:  # translate domain errors to 4xx/5xx bodies
            err = _translate(exc)
            self._send(err.status, err.body())

    # ------------------------------------------------------------------
    def _dispatch(self, method, path, params):
        repo = self.server.repo
        if method == "GET":
            if path == "/graph":
                return self._graph(repo, params)
            if path.startswith("/node/"):
                return node_json(repo.graph.get_node(_path_id(path, "/node/")))
            if path == "/diff":
                a = _int_param(params, "a")
                b = _int_param(params, "b")
                content = params.get("content", ["0"])[0] in ("1", "true", "yes")
                return querydiff.shallow_diff(repo, a, b, include_content=content).to_json()
            if path == "/deepdiff":
                return querydiff.deep_diff(
                    repo, _int_param(params, "a"), _int_param(params, "b")
                ).to_json()
            if path == "/timeseries":
                artifact = params.get("artifact", [None])[0]
                key = params.get("key", [None])[0]
                if not artifact or not key:
                    raise ApiError(400, "missing-param", "artifact and key are required")
                points = querydiff.property_timeseries(repo, artifact, key)
                return {
                    "artifact": artifact,
                    "key": key,
                    "points": [[ts, to_tagged(v)] for ts, v in points],
                }
            if path == "/pipelines":
                return {"pipelines": querydiff.list_pipelines(repo)}
            if path == "/monitors":
                return {"monitors": [_monitor_json(s) for s in monitor.list_monitors(repo)]}
            if path == "/alerts":
                return {"alerts": monitor.list_alerts(repo)}
            if path == "/fileviews":
                return {"fileviews": fileview.list_views(repo)}
            if path == "/artifacts":
                return self._artifacts(repo, params)
            return self._static(path)

        if method == "POST":
            body = self._read_body()
            if path == "/query":
                result = repo.graph.match_pattern(body)
                if isinstance(result, int):
                    return {"count": result}
                return {"bindings": [list(b) for b in result]}
            if path == "/pipelines":
                pid = self._mutate(
                    lambda: querydiff.mark_pipeline(
                        repo, int(body["start"]), int(body["end"]), body.get("name", "pipeline")
                    )
                )
                return {"id": pid}
            if path == "/monitors":
                spec = monitor.MonitorSpec(
                    target=body.get("target", ""),
                    key=body.get("key", ""),
                    condition=body.get("condition", {}),
                    enabled=bool(body.get("enabled", True)),
                )
                return {"id": self._mutate(lambda: monitor.register_monitor(repo, spec))}
            if path == "/annotate":
                for field in ("node", "key"):
                    if field not in body:
                        raise ApiError(400, "missing-field", f"{field} is required")
                value = decode_json_value(body.get("value"))
                self._mutate(lambda: annotate(repo, int(body["node"]), body["key"], value))
                return {"ok": True}
            if path == "/fileviews":
                return self._fileviews_post(repo, body)
            if path == "/gridrun":
                return self._gridrun(repo, body)
            raise ApiError(404, "no-route", f"no POST route {path}")

        if method == "DELETE":
            if path.startswith("/monitors/"):
                mid = _path_id(path, "/monitors/")
                self._mutate(lambda: monitor.remove_monitor(repo, mid))
                return {"ok": True}
            if path == "/monitors":
                body = self._read_body()
                mid = int(body.get("id", 0))
                self._mutate(lambda: monitor.remove_monitor(repo, mid))
                return {"ok": True}
            raise ApiError(404, "no-route", f"no DELETE route {path}")
        raise ApiError(404, "no-route", f"no route {method} {path}")

    # ------------------------------------------------------------------
    def _mutate(self, fn):
        """Run a mutation under the writer lock; busy lock means 409, never a queue."""
        repo = self.server.repo
        if os.environ.get("PROVTRAIL_ACTIVE") == "1":
            raise ApiError(423, "recursion-guard", "server is running inside an active capture")
        try:
            with repo.lock(timeout=MUTATION_LOCK_TIMEOUT):
                return fn()
        except LockTimeoutError:
            raise ApiError(409, "lock-busy", "a capture holds the repository lock") from None

    def _graph(self, repo, params):
        kinds = [k for k in (params.get("kinds", [""])[0] or "").split(",") if k]
        limit = _int_param(params, "limit", default=500)
        nodes = []
        for node in repo.graph.nodes():
            if kinds and node.kind not in kinds:
                continue
            nodes.append(node_json(node))
            if len(nodes) >= limit:
                break
        ids = {n["id"] for n in nodes}
        edges = [
            {"from": e.src, "to": e.dst, "label": e.label}
            for e in repo.graph.edges()
            if e.src in ids and e.dst in ids
        ]
        return {"nodes": nodes, "edges": edges}

    def _artifacts(self, repo, params):
        tag = params.get("tag", [None])[0]
        out = []
        for node in repo.graph.nodes("Artifact"):
            if tag and node.value("tag") != tag:
                continue
            snaps = repo.snapshots_of_artifact(node.id)
            out.append(
                {
                    "id": node.id,
                    "path": node.value("path"),
                    "tag": node.value("tag"),
                    "latest_snapshot": snaps[-1].id if snaps else None,
                    "snapshots": [s.id for s in snaps],
                }
            )
        return {"artifacts": out}

    def _fileviews_post(self, repo, body):
        name = body.get("name")
        if not name:
            raise ApiError(400, "missing-field", "name is required")
        if body.get("materialize"):
            result = self._mutate(lambda: fileview.materialize(repo, name))
            return {"materialized": result.to_json()}
        sql = body.get("sql")
        if not sql:
            raise ApiError(400, "missing-field", "sql is required")
        mode = body.get("mode", "virtual")
        entry = self._mutate(lambda: fileview.create_view(repo, name, sql, mode))
        return {"created": {"name": name, **entry}}

    def _gridrun(self, repo, body):
        derivation = body.get("derivation")
        if derivation is None:
            raise ApiError(400, "missing-field", "derivation is required")
        params = []
        for p in body.get("params", []):
            if "values" in p:
                values = p["values"]
            else:
                values = capture.domain_values(
                    float(p["start"]), float(p["stop"]), float(p["step"])
                )
            params.append((p["key"], values))

        def run():
            template = capture.template_from_derivation(repo, int(derivation), params)
            return capture.run_grid(repo, template, cap=HTTP_GRID_CAP)

        results = self._mutate(run)
        return {"runs": [r.to_json() for r in results]}

    def _static(self, path):
        ui_dir = self.server.ui_dir
        if ui_dir is None:
            raise ApiError(404, "no-route", f"no GET route {path}")
        rel = path.lstrip("/") or "index.html"
        full = (Path(ui_dir) / rel).resolve()
        if not str(full).startswith(str(Path(ui_dir).resolve())) or not full.is_file():
            raise ApiError(404, "not-found", f"no file {path}")
        ctype = mimetypes.guess_type(str(full))[0] or "application/octet-stream"
        self._send(200, full.read_bytes(), content_type=ctype)
        return _ALREADY_SENT


def _path_id(path, prefix):
    raw = path[len(prefix):]
    try:
        return int(raw)
    except ValueError:
        raise ApiError(400, "bad-id", f"node id must be an integer, got {raw!r}") from None


def _monitor_json(spec):
    return {
        "id": spec.id,
        "target": spec.target,
        "key": spec.key,
        "condition": spec.condition,
        "enabled": spec.enabled,
    }


_STATUS_MAP = [
    ((UnknownNodeError, UnknownArtifactError, UnknownViewError, NoPathError,
      NoCommonAncestorError), 404, "not-found"),
    ((PatternError, SqlParseError, MonitorError, TemplateError, GridCapError,
      NameCollisionError, EvaluationError, ValueError, KeyError, TypeError), 400, "bad-request"),
    ((LockTimeoutError,), 409, "lock-busy"),
    ((RecursionGuardError,), 423, "recursion-guard"),
]


def _translate(exc) -> ApiError:
    for types, status, code in _STATUS_MAP:
        if isinstance(exc, types):
            return ApiError(status, code, str(exc))
    if isinstance(exc, ProvTrailError):
        return ApiError(400, "bad-request", str(exc))
    return ApiError(500, "internal", f"{type(exc).__name__}: {exc}")


def create_server(repo, bind="127.0.0.1", port=0, ui_dir=None, verbose=False):
    server = ThreadingHTTPServer((bind, port), Handler)
    server.daemon_threads = True
    server.repo = repo
    server.ui_dir = str(ui_dir) if ui_dir else None
    server.op_lock = threading.RLock()
    server.verbose = verbose
    return server


def serve(repo_path, bind="127.0.0.1", port=8734, ui_dir=None, verbose=True):
    """Blocking entry point used by the CLI `serve` verb."""
    repo = Repository.open(repo_path)
    server = create_server(repo, bind=bind, port=port, ui_dir=ui_dir, verbose=verbose)
    host, actual_port = server.server_address[:2]
    print(f"provtrail API on http://{host}:{actual_port}/" + (" (ui enabled)" if ui_dir else ""))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        repo.close()
