"""Command-line front end.

Exit codes: 0 success, 1 user error, 2 internal error. `run -- <command>`
exits with the wrapped command's own exit code so scripts stay transparent.
With --json, every verb prints exactly one JSON document on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time

from . import __version__, api, capture, fileview, monitor, querydiff
from .errors import ProvTrailError
from .ingest import annotate, decode_json_value
from .props import TimeSeries, to_tagged
from .repo import Repository


def build_parser():
    parser = argparse.ArgumentParser(prog="provtrail", description=__doc__)
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--repo", help="repository root (default: ascend from cwd)")
    parser.add_argument("--version", action="version", version=f"provtrail {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("init", help="initialize a repository in the current directory")
    p.add_argument("--author")

    p = sub.add_parser("run", help="capture a command: provtrail run -- <command...>")
    p.add_argument("command", nargs=argparse.REMAINDER)

    p = sub.add_parser("commit", help="create an explicit version")
    p.add_argument("-m", "--message", required=True)
    p.add_argument("--author")

    sub.add_parser("log", help="list versions")

    p = sub.add_parser("diff", help="diff two snapshots (ids or artifact paths)")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--content", action="store_true")
    p.add_argument("--deep", action="store_true")

    p = sub.add_parser("blame", help="who last modified an artifact")
    p.add_argument("artifact")
    p.add_argument("--record", type=int)

    p = sub.add_parser("fileview", help="file views: -c|-e|-l|-d -n=<name> -q=<sql>")
    p.add_argument("flags", nargs=argparse.REMAINDER)

    p = sub.add_parser("pipeline", help="mark or list pipelines")
    psub = p.add_subparsers(dest="action", required=True)
    mark = psub.add_parser("mark")
    mark.add_argument("start", type=int)
    mark.add_argument("end", type=int)
    mark.add_argument("--name", required=True)
    psub.add_parser("list")

    p = sub.add_parser("monitor", help="manage monitors")
    msub = p.add_subparsers(dest="action", required=True)
    madd = msub.add_parser("add")
    madd.add_argument("--target", required=True)
    madd.add_argument("--key", required=True)
    madd.add_argument("--op", choices=monitor.THRESHOLD_OPS)
    madd.add_argument("--value")
    madd.add_argument("--abs-delta-gt", type=float)
    madd.add_argument("--disabled", action="store_true")
    mrm = msub.add_parser("rm")
    mrm.add_argument("id", type=int)
    msub.add_parser("list")

    sub.add_parser("alerts", help="list alerts")

    p = sub.add_parser("grid", help="run a parameter grid from a base derivation")
    p.add_argument("derivation", type=int)
    p.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=START:STOP:STEP|KEY=v1,v2,...",
        help="repeatable parameter binding",
    )
    p.add_argument("--cap", type=int, default=capture.GRID_CAP)

    p = sub.add_parser("annotate", help="attach a user property to a node")
    p.add_argument("node", type=int)
    p.add_argument("key")
    p.add_argument("value", help="JSON value, or a bare string")

    p = sub.add_parser("serve", help="start the local HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8734")
    p.add_argument("--ui-dir", help="directory with the built web UI")

    p = sub.add_parser("query", help="run a path-pattern query (JSON argument or '-')")
    p.add_argument("pattern")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # fileview takes combined -c|-e|-l|-d -n= -q= flags, which argparse
    # would reject as unknown options; hand them through untouched
    fileview_flags = None
    if "fileview" in argv:
        split = argv.index("fileview") + 1
        argv, fileview_flags = argv[:split], argv[split:]
    parser = build_parser()
    args = parser.parse_args(argv)
    if fileview_flags is not None:
        args.flags = fileview_flags
    out = _Output(json_mode=args.json)
    try:
        return _run_verb(args, out) or 0
    except ProvTrailError as exc:
        out.fail(str(exc))
        return 1
    except BrokenPipeError:
        return 0
    except Exception as exc:  # internal error
        out.fail(f"internal error: {type(exc).__name__}: {exc}")
        return 2


class _Output:
    def __init__(self, json_mode=False):
        self.json_mode = json_mode

    def emit(self, doc, human=None):
        if self.json_mode:
            print(json.dumps(doc))
        elif human:
            print(human)
        elif isinstance(doc, str):
            print(doc)

    def lines(self, doc, rows):
        if self.json_mode:
            print(json.dumps(doc))
        else:
            for row in rows:
                print(row)

    def fail(self, message):
        if self.json_mode:
            print(json.dumps({"error": message}))
        print(f"provtrail: {message}", file=sys.stderr)


def _open_repo(args) -> Repository:
    if args.repo:
        return Repository.open(args.repo)
    return Repository.discover()


def _run_verb(args, out):
    verb = args.verb
    if verb == "init":
        repo = capture.init_repo(os.getcwd(), author=args.author)
        out.emit({"initialized": str(repo.root)}, f"initialized provtrail repository in {repo.root}")
        repo.close()
        return 0

    repo = _open_repo(args)
    try:
        return _dispatch_verb(verb, args, out, repo)
    finally:
        repo.close()


def _dispatch_verb(verb, args, out, repo):
    if verb == "run":
        command = list(args.command)
        if not command or command[0] != "--":
            raise ProvTrailError("usage: provtrail run -- <command...>")
        cmdline = shlex.join(command[1:])
        result = capture.run_captured(repo, cmdline, echo=not out.json_mode)
        doc = result.to_json()
        out.emit(
            doc,
            f"version {result.version_id} derivation {result.derivation_id} "
            f"({len(result.changed)} changed, exit {result.exit_code})",
        )
        return result.exit_code

    if verb == "commit":
        vid = capture.commit_explicit(repo, args.message, author=args.author)
        out.emit({"version": vid}, f"committed version {vid}")
        return 0

    if verb == "log":
        rows = []
        docs = []
        for node in repo.graph.nodes("Version"):
            stamp = time.strftime("%Y-%m-%d %H:%M:%S", time.localtime(node.value("timestamp") or 0))
            kind = node.value("kind")
            message = node.value("message") or ""
            flag = "" if node.value("has_provenance") else " [no provenance]"
            changed = len(repo.graph.out_edges(node.id, "HAS_SNAPSHOT"))
            rows.append(f"{node.id:>5} {kind[:1].lower()} {stamp} {node.value('author')} "
                        f"({changed} changed){flag} {message}")
            docs.append(
                {
                    "id": node.id,
                    "kind": kind,
                    "timestamp": node.value("timestamp"),
                    "author": node.value("author"),
                    "message": message or None,
                    "has_provenance": node.value("has_provenance"),
                    "changed": changed,
                }
            )
        out.lines({"versions": docs}, rows)
        return 0

    if verb == "diff":
        a = _resolve_snapshot(repo, args.a)
        b = _resolve_snapshot(repo, args.b)
        if args.deep:
            report = querydiff.deep_diff(repo, a, b).to_json()
        else:
            report = querydiff.shallow_diff(repo, a, b, include_content=args.content).to_json()
        out.emit(report, json.dumps(report, indent=1))
        return 0

    if verb == "blame":
        report = blame_doc = querydiff.blame(repo, args.artifact, record=args.record)
        out.emit(blame_doc, json.dumps(report, indent=1))
        return 0

    if verb == "fileview":
        return _fileview_verb(repo, args.flags, out)

    if verb == "pipeline":
        if args.action == "mark":
            pid = querydiff.mark_pipeline(repo, args.start, args.end, args.name)
            out.emit({"id": pid}, f"pipeline {pid} ({args.name})")
        else:
            pipelines = querydiff.list_pipelines(repo)
            out.lines(
                {"pipelines": pipelines},
                [f"{p['id']:>5} {p['name']} steps={p['steps']}" for p in pipelines],
            )
        return 0

    if verb == "monitor":
        return _monitor_verb(repo, args, out)

    if verb == "alerts":
        alerts = monitor.list_alerts(repo)
        rows = []
        for a in alerts:
            row = (f"{a['id']:>5} monitor={a['monitor']} version={a['version']} "
                   f"{a['path']} observed={a['observed']}")
            if a.get("prior") is not None:
                row += f" prior={a['prior']}"
            rows.append(row)
        out.lines({"alerts": alerts}, rows)
        return 0

    if verb == "grid":
        params = [_parse_param(p) for p in args.param]
        template = capture.template_from_derivation(repo, args.derivation, params)
        results = capture.run_grid(repo, template, cap=args.cap)
        out.lines(
            {"runs": [r.to_json() for r in results]},
            [f"{r.cmdline} -> version {r.version_id} exit {r.exit_code}" for r in results],
        )
        return 0

    if verb == "annotate":
        try:
            value = decode_json_value(json.loads(args.value))
        except ValueError:
            value = args.value
        annotate(repo, args.node, args.key, value)
        out.emit({"ok": True}, f"annotated node {args.node}: {args.key}")
        return 0

    if verb == "serve":
        host, _, port = args.bind.partition(":")
        ui_dir = args.ui_dir or _default_ui_dir()
        api.serve(repo.root, bind=host or "127.0.0.1", port=int(port or 8734), ui_dir=ui_dir)
        return 0

    if verb == "query":
        raw = sys.stdin.read() if args.pattern == "-" else args.pattern
        try:
            pattern = json.loads(raw)
        except ValueError as exc:
            raise ProvTrailError(f"pattern is not valid JSON: {exc}") from None
        result = repo.graph.match_pattern(pattern)
        if isinstance(result, int):
            out.emit({"count": result}, str(result))
        else:
            out.lines({"bindings": [list(b) for b in result]}, [str(list(b)) for b in result])
        return 0

    raise ProvTrailError(f"unknown verb {verb!r}")


def _resolve_snapshot(repo, token):
    try:
        return int(token)
    except ValueError:
        pass
    artifact = repo.artifact_by_path(token)
    if artifact is None:
        raise ProvTrailError(f"no snapshot id or artifact path {token!r}")
    snaps = repo.snapshots_of_artifact(artifact.id)
    if not snaps:
        raise ProvTrailError(f"artifact {token!r} has no snapshots")
    return snaps[-1].id


def _parse_param(raw):
    if "=" not in raw:
        raise ProvTrailError(f"--param needs KEY=START:STOP:STEP or KEY=v1,v2 (got {raw!r})")
    key, _, domain = raw.partition("=")
    if ":" in domain:
        parts = domain.split(":")
        if len(parts) != 3:
            raise ProvTrailError(f"numeric domain must be START:STOP:STEP (got {domain!r})")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise ProvTrailError(f"numeric domain must be numbers (got {domain!r})") from None
        return key, capture.domain_values(start, stop, step)
    values = []
    for piece in domain.split(","):
        try:
            values.append(float(piece))
        except ValueError:
            values.append(piece)
    return key, values


def _fileview_verb(repo, flags, out):
    action = None
    name = None
    sql = None
    materialized = False
    for flag in flags:
        if flag in ("-c", "-e", "-l", "-d"):
            if action:
                raise ProvTrailError("fileview takes exactly one of -c|-e|-l|-d")
            action = flag
        elif flag.startswith("-n="):
            name = flag[3:].strip("'\"")
        elif flag.startswith("-q="):
            sql = flag[3:].strip("'\"")
        elif flag in ("--materialized", "-m"):
            materialized = True
        else:
            raise ProvTrailError(f"unknown fileview flag {flag!r}")
    if action is None:
        raise ProvTrailError("fileview requires one of -c|-e|-l|-d")

    if action == "-l":
        views = fileview.list_views(repo)
        out.lines(
            {"fileviews": views},
            [f"{n} [{v['mode']}] reads={v.get('view_reads', 0)} :: {v['sql']}" for n, v in views.items()],
        )
        return 0
    if name is None:
        raise ProvTrailError("fileview needs -n=<name>")
    if action == "-c":
        if sql is None:
            raise ProvTrailError("fileview -c needs -q=<sql>")
        mode = "materialized" if materialized else "virtual"
        entry = fileview.create_view(repo, name, sql, mode=mode)
        out.emit({"created": {"name": name, **entry}}, f"created {mode} view {name}")
        return 0
    if action == "-d":
        fileview.drop_view(repo, name)
        out.emit({"dropped": name}, f"dropped view {name}")
        return 0
    # -e: execute -- materialize a materialized view, print a virtual one
    views = fileview.list_views(repo)
    if name not in views:
        raise ProvTrailError(f"no view named {name!r}")
    if views[name]["mode"] == "materialized":
        result = fileview.materialize(repo, name)
        out.emit(
            {"materialized": result.to_json()},
            f"materialized {name}: version {result.version_id} derivation {result.derivation_id}",
        )
    else:
        rows, _ = fileview.read_view(repo, name)
        out.lines({"rows": rows}, [",".join(r) for r in rows])
    return 0


def _monitor_verb(repo, args, out):
    if args.action == "add":
        if args.abs_delta_gt is not None:
            condition = {"abs_delta_gt": args.abs_delta_gt}
        elif args.op is not None and args.value is not None:
            try:
                value = float(args.value)
            except ValueError:
                value = args.value
            condition = {"op": args.op, "value": value}
        else:
            raise ProvTrailError("monitor add needs --op/--value or --abs-delta-gt")
        spec = monitor.MonitorSpec(
            target=args.target, key=args.key, condition=condition, enabled=not args.disabled
        )
        mid = monitor.register_monitor(repo, spec)
        out.emit({"id": mid}, f"monitor {mid} registered")
        return 0
    if args.action == "rm":
        monitor.remove_monitor(repo, args.id)
        out.emit({"removed": args.id}, f"monitor {args.id} removed")
        return 0
    specs = monitor.list_monitors(repo)
    out.lines(
        {"monitors": [
            {"id": s.id, "target": s.target, "key": s.key, "condition": s.condition, "enabled": s.enabled}
            for s in specs
        ]},
        [f"{s.id:>5} {'on ' if s.enabled else 'off'} {s.target} {s.key} {s.condition}" for s in specs],
    )
    return 0


def _default_ui_dir():
    env = os.environ.get("PROVTRAIL_UI_DIR")
    if env and os.path.isdir(env):
        return env
    candidate = os.path.abspath(os.path.join(os.getcwd(), "frontend", "dist"))
    return candidate if os.path.isdir(candidate) else None


if __name__ == "__main__":
    sys.exit(main())
