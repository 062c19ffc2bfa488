"""Ingestor framework: turns a completed command plus before/after state into
property-graph deltas.

Ingestors are matched against the full command line by regular expression and
run in registration order. The default POSIX ingestor always runs. External
plugin executables speak a JSON protocol on stdin/stdout:

    stdin:  {"cmdline": ..., "phase": ..., "changed": [{"path","kind"}...], "workdir": ...}
    stdout: {"target": "derivation" | {"snapshot": <path>},
             "entries": {<key>: <value>, ...},
             "record_lineage": [[<out path>, <out row>, [[<in path>, <in row>], ...]], ...]}

A failing plugin never aborts a capture; its delta degrades to an
`ingestor_error` entry on the derivation.
"""

from __future__ import annotations

import json
import re
import subprocess
from dataclasses import dataclass, field
from fnmatch import fnmatch

from .errors import CommandParseError, ProvTrailError, UnknownNodeError
from .posixcmd import posix_parse
from .props import TimeSeries, normalize

PLUGIN_TIMEOUT = 30.0

DEFAULT_LOSS_PATTERN = r"Iteration\s+(\d+).*?loss\s*=\s*([-+0-9.eE]+)"
DEFAULT_ACCURACY_PATTERN = r"Iteration\s+(\d+).*?accuracy\s*=\s*([-+0-9.eE]+)"
DEFAULT_LOG_GLOB = "*.log"


@dataclass
class IngestorSpec:
    name: str
    trigger: str  # regex matched against the full command line
    phases: tuple = ("after",)
    kind: str = "builtin"  # builtin | external
    path: str | None = None

    def __post_init__(self):
        re.compile(self.trigger)  # triggers must compile at registration time

    def matches(self, cmdline: str) -> bool:
        return re.search(self.trigger, cmdline) is not None


@dataclass
class CaptureContext:
    cmdline: str
    workdir: str
    phase: str
    changed: list | None = None  # scan.Change list; None before post-scan


@dataclass
class PropertyDelta:
    source: str
    target: object = "derivation"  # "derivation" or ("snapshot", path)
    entries: dict = field(default_factory=dict)
    record_lineage: list | None = None  # [(out path, out row, [(in path, in row)...])]


def load_specs(repo) -> list[IngestorSpec]:
    """External ingestors registered in .provtrail/ingestors.json."""
    try:
        raw = json.loads(repo.ingestors_path().read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return []
    specs = []
    for entry in raw:
        try:
            specs.append(
                IngestorSpec(
                    name=entry["name"],
                    trigger=entry.get("trigger", ".*"),
                    phases=tuple(entry.get("phases", ["after"])),
                    kind=entry.get("kind", "external"),
                    path=entry.get("path"),
                )
            )
        except (KeyError, re.error):
            continue
    return specs


def register_spec(repo, spec: IngestorSpec):
    current = []
    try:
        current = json.loads(repo.ingestors_path().read_text(encoding="utf-8"))
    except (OSError, ValueError):
        pass
    if any(e.get("name") == spec.name for e in current):
        raise ProvTrailError(f"ingestor name already registered: {spec.name}")
    current.append(
        {"name": spec.name, "trigger": spec.trigger, "phases": list(spec.phases), "kind": spec.kind, "path": spec.path}
    )
    repo.ingestors_path().write_text(json.dumps(current, indent=1) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# built-in ingestors

def posix_ingest(ctx: CaptureContext) -> PropertyDelta:
    """Default ingestor: annotate utility, options, option arguments, operands."""
    delta = PropertyDelta(source="posix")
    try:
        commands = posix_parse(ctx.cmdline)
    except CommandParseError as exc:
        delta.entries["parse_error"] = str(exc)
        return delta
    first = commands[0]
    delta.entries.update(
        {
            "utility": first.utility,
            "options": list(first.options),
            "option_args": [list(pair) for pair in first.option_args],
            "operands": list(first.operands),
            "pipeline": first.pipeline,
        }
    )
    if len(commands) > 1:
        delta.entries["commands"] = [
            {
                "utility": c.utility,
                "options": list(c.options),
                "option_args": [list(pair) for pair in c.option_args],
                "operands": list(c.operands),
                "pipeline": c.pipeline,
                "raw": c.raw,
            }
            for c in commands
        ]
    return delta


def training_log_ingest(data: bytes, loss_pattern=None, accuracy_pattern=None) -> dict:
    """Extract per-iteration loss/accuracy time series from a training log.

    Unmatched lines are ignored; zero matches yield an empty dict.
    """
    loss_re = re.compile(loss_pattern or DEFAULT_LOSS_PATTERN)
    acc_re = re.compile(accuracy_pattern or DEFAULT_ACCURACY_PATTERN)
    loss: dict[int, float] = {}
    accuracy: dict[int, float] = {}
    for line in data.decode("utf-8", "replace").splitlines():
        m = loss_re.search(line)
        if m:
            loss[int(m.group(1))] = float(m.group(2))
        m = acc_re.search(line)
        if m:
            accuracy[int(m.group(1))] = float(m.group(2))
    entries = {}
    if loss:
        entries["loss"] = TimeSeries(sorted(loss.items()))
    if accuracy:
        entries["accuracy"] = TimeSeries(sorted(accuracy.items()))
    return entries


def training_log_deltas(ctx: CaptureContext, repo) -> list[PropertyDelta]:
    """One delta per created/updated log file produced by the capture."""
    glob = repo.config.get("training_log_glob", DEFAULT_LOG_GLOB)
    loss_pat = repo.config.get("training_loss_pattern")
    acc_pat = repo.config.get("training_accuracy_pattern")
    deltas = []
    for change in ctx.changed or []:
        if change.kind == "deleted" or not fnmatch(change.path.rsplit("/", 1)[-1], glob):
            continue
        try:
            with open(f"{ctx.workdir}/{change.path}", "rb") as fh:
                data = fh.read()
        except OSError:
            continue
        entries = training_log_ingest(data, loss_pat, acc_pat)
        if entries:
            deltas.append(PropertyDelta(source="training_log", target=("snapshot", change.path), entries=entries))
    return deltas


# ----------------------------------------------------------------------
# external plugins

def run_plugin(spec: IngestorSpec, ctx: CaptureContext) -> PropertyDelta:
    request = {
        "cmdline": ctx.cmdline,
        "phase": ctx.phase,
        "changed": [{"path": c.path, "kind": c.kind} for c in (ctx.changed or [])],
        "workdir": ctx.workdir,
    }
    try:
        proc = subprocess.run(
            [spec.path],
            input=json.dumps(request).encode("utf-8"),
            capture_output=True,
            timeout=PLUGIN_TIMEOUT,
            cwd=ctx.workdir,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        return PropertyDelta(source=spec.name, entries={"ingestor_error": f"{spec.name}: {exc}"})
    if proc.returncode != 0:
        msg = proc.stderr.decode("utf-8", "replace")[:512]
        return PropertyDelta(
            source=spec.name, entries={"ingestor_error": f"{spec.name}: exit {proc.returncode}: {msg}"}
        )
    try:
        reply = json.loads(proc.stdout.decode("utf-8"))
        target = reply.get("target", "derivation")
        if isinstance(target, dict):
            target = ("snapshot", target["snapshot"])
        entries = {k: decode_json_value(v) for k, v in reply.get("entries", {}).items()}
        lineage = reply.get("record_lineage")
        return PropertyDelta(source=spec.name, target=target, entries=entries, record_lineage=lineage)
    except (ValueError, KeyError, TypeError) as exc:
        return PropertyDelta(source=spec.name, entries={"ingestor_error": f"{spec.name}: bad reply: {exc}"})


def decode_json_value(value):
    # plugins may send {"__series__": [[i, v], ...]} for time-series values
    if isinstance(value, dict) and set(value) == {"__series__"}:
        return TimeSeries(value["__series__"])
    if isinstance(value, dict):
        return {k: decode_json_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [decode_json_value(v) for v in value]
    return normalize(value)


def dispatch(repo, ctx: CaptureContext, specs=None) -> list[PropertyDelta]:
    """Run the after-phase ingestors for a finished command, isolation included.

    The POSIX default always runs first; registered ingestors whose trigger
    matches follow in registration order. A raising ingestor contributes an
    `ingestor_error` delta instead of aborting.
    """
    deltas = [posix_ingest(ctx)]
    try:
        deltas.extend(training_log_deltas(ctx, repo))
    except Exception as exc:  # isolation: builtin bugs must not kill a capture
        deltas.append(PropertyDelta(source="training_log", entries={"ingestor_error": f"training_log: {exc}"}))
    for spec in specs if specs is not None else load_specs(repo):
        if "after" not in spec.phases or not spec.matches(ctx.cmdline):
            continue
        if spec.kind == "external" and spec.path:
            deltas.append(run_plugin(spec, ctx))
        else:
            deltas.append(PropertyDelta(source=spec.name, entries={"ingestor_error": f"{spec.name}: not runnable"}))
    return deltas


# ----------------------------------------------------------------------
# annotations

def annotate(repo, node_id, key, value):
    """Attach a user property; the previous user value moves to history:<key>."""
    with repo.lock():
        node = repo.graph.get_node(node_id)
        previous = node.properties.get(key)
        if previous is not None and previous.source == "user":
            history_key = f"history:{key}"
            history = node.value(history_key) or []
            history.append(previous.value)
            repo.graph.set_property(node_id, history_key, history, "user")
        repo.graph.set_property(node_id, key, value, "user")


def get_annotation(repo, node_id, key):
    node = repo.graph.get_node(node_id)
    if node is None:
        raise UnknownNodeError(f"no node {node_id}")
    return node.value(key)
