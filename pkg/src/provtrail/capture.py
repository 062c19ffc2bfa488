"""One-command-one-commit capture protocol.

Wrapping a command mints exactly one implicit version. If the tree changed
since the last recorded version (an editor, an untracked script), a separate
implicit version flagged ``has_provenance=false`` is minted first, with a
derivation whose only statement is ``missing=true``. The wrapped command then
runs in a subshell; the post-scan changes become snapshots attached to the
new version, a Derivation node records the command context, and ingestors
contribute property deltas.
"""

from __future__ import annotations

import itertools
import os
import struct
import subprocess
import sys
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GridCapError, RecursionGuardError, TemplateError
from .ingest import CaptureContext, PropertyDelta, dispatch, load_specs, run_plugin
from .monitor import evaluate_on_version
from .posixcmd import file_candidates, posix_parse
from .repo import Repository, StateEntry
from .scan import Change, diff_states, entry_bytes, load_ignore_rules, scan_workdir

OUTPUT_HEAD_BYTES = 64 * 1024
GRID_CAP = 256
LINEAGE_SIDECAR_ROWS = 10_000
PLUGIN_JOIN_TIMEOUT = 35.0


@dataclass
class ChangeRecord:
    path: str
    kind: str  # created | updated | deleted
    snapshot_id: int | None = None


@dataclass
class CaptureResult:
    version_id: int
    derivation_id: int
    changed: list = field(default_factory=list)  # ChangeRecord list
    exit_code: int = 0
    duration_ms: float = 0.0
    cmdline: str = ""
    external_version_id: int | None = None

    def to_json(self):
        return {
            "version": self.version_id,
            "derivation": self.derivation_id,
            "changed": [
                {"path": c.path, "kind": c.kind, "snapshot": c.snapshot_id} for c in self.changed
            ],
            "exit_code": self.exit_code,
            "duration_ms": self.duration_ms,
            "cmdline": self.cmdline,
            "external_version": self.external_version_id,
        }


@dataclass
class ParamBinding:
    key: str
    span: tuple  # (start, end) character span in the base command
    values: list


@dataclass
class DerivationTemplate:
    command: str
    bindings: list  # ParamBinding list
    derivation_id: int | None = None

    def validate(self):
        spans = sorted(b.span for b in self.bindings)
        for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
            if a2 < b1:
                raise TemplateError(f"overlapping substitution sites: {(a1, b1)} and {(a2, b2)}")
        for binding in self.bindings:
            a, b = binding.span
            if not (0 <= a <= b <= len(self.command)):
                raise TemplateError(f"substitution site {binding.span} outside command")
            if not binding.values:
                raise TemplateError(f"parameter {binding.key} has an empty domain")


def init_repo(root, author=None) -> Repository:
    """Create a repository and record the initial version of the tree."""
    repo = Repository.create_layout(root, author=author)
    with repo.lock():
        state, warnings = scan_workdir(repo.root)
        changes = diff_states({}, state)
        records, state_tree = _mint_snapshots(repo, changes, {}, state)
        _mint_version(
            repo,
            kind="Explicit",
            author=author or repo.author,
            message="init",
            has_provenance=True,
            state_tree=state_tree,
            records=records,
            parent=None,
        )
    return repo


def run_captured(repo, cmdline, env=None, author=None, echo=False) -> CaptureResult:
    """Capture one command: pre-scan, execute, post-scan, record, ingest."""
    if not cmdline or not cmdline.strip():
        raise ValueError("empty command line")
    base_env = dict(os.environ if env is None else env)
    if base_env.get("PROVTRAIL_ACTIVE") == "1":
        raise RecursionGuardError("refusing to capture inside an active capture")
    author = author or repo.author

    with repo.lock():
        rules = load_ignore_rules(repo.root)
        pre_state, pre_warnings = scan_workdir(repo.root, rules)
        external_version = _record_external_edits(repo, pre_state, author)

        base_env["PROVTRAIL_ACTIVE"] = "1"
        started = time.time()
        before_deltas = _run_before_hooks(repo, cmdline)
        during = _start_during_hooks(repo, cmdline)
        t0 = time.monotonic()
        exit_code, stdout_head, stderr_head, spawn_error = _run_subshell(repo, cmdline, base_env, echo)
        duration_ms = (time.monotonic() - t0) * 1000.0
        during_deltas = _join_during_hooks(during)

        post_state, post_warnings = scan_workdir(repo.root, rules)
        changes = diff_states(pre_state, post_state)
        result = _record_capture(
            repo,
            cmdline=cmdline,
            author=author,
            pre_entries=repo.head_state(),
            post_state=post_state,
            changes=changes,
            derivation_props={
                "cmdline": (cmdline, "capture"),
                "exit_code": (float(exit_code), "capture"),
                "duration_ms": (duration_ms, "capture"),
                "started_at": (started, "capture"),
                "stdout_head": (stdout_head, "capture"),
                "stderr_head": (stderr_head, "capture"),
                **({"spawn_error": (spawn_error, "capture")} if spawn_error else {}),
                **(
                    {"scan_warnings": (pre_warnings + post_warnings, "capture")}
                    if pre_warnings or post_warnings
                    else {}
                ),
            },
            exit_code=exit_code,
            duration_ms=duration_ms,
            extra_deltas=before_deltas + during_deltas,
        )
        result.external_version_id = external_version
        return result


def _run_before_hooks(repo, cmdline):
    """Before-phase plugins run ahead of the command; no changed list exists yet."""
    ctx = CaptureContext(cmdline=cmdline, workdir=str(repo.root), phase="before", changed=None)
    deltas = []
    for spec in load_specs(repo):
        if "before" in spec.phases and spec.matches(cmdline) and spec.kind == "external" and spec.path:
            deltas.append(run_plugin(spec, ctx))
    return deltas


def _start_during_hooks(repo, cmdline):
    """Launch during-phase plugins concurrently with the command.

    They see no changed-file list (the post-scan has not happened); their
    deltas are merged once the command finishes.
    """
    ctx = CaptureContext(cmdline=cmdline, workdir=str(repo.root), phase="during", changed=None)
    pending = []
    for spec in load_specs(repo):
        if "during" not in spec.phases or not spec.matches(cmdline):
            continue
        if spec.kind != "external" or not spec.path:
            continue
        holder = {}

        def _run(spec=spec, holder=holder):
            holder["delta"] = run_plugin(spec, ctx)

        thread = threading.Thread(target=_run, daemon=True)
        thread.start()
        pending.append((thread, holder, spec))
    return pending


def _join_during_hooks(pending):
    deltas = []
    for thread, holder, spec in pending:
        thread.join(timeout=PLUGIN_JOIN_TIMEOUT)
        delta = holder.get("delta")
        if delta is None:
            delta = PropertyDelta(
                source=spec.name, entries={"ingestor_error": f"{spec.name}: during hook timed out"}
            )
        deltas.append(delta)
    return deltas


def commit_explicit(repo, message, author=None) -> int:
    """Mint an explicit version; pending external changes are snapshotted into it."""
    author = author or repo.author
    with repo.lock():
        state, _ = scan_workdir(repo.root)
        head_entries = repo.head_state()
        changes = diff_states(head_entries, state)
        records, state_tree = _mint_snapshots(repo, changes, head_entries, state)
        version_id = _mint_version(
            repo,
            kind="Explicit",
            author=author,
            message=message,
            has_provenance=not changes,
            state_tree=state_tree,
            records=records,
            parent=repo.head_version(),
        )
        if changes:
            derivation = repo.graph.add_node("Derivation", {"missing": (True, "capture")})
            repo.graph.add_edge(derivation, version_id, "IN_VERSION")
            for record in records:
                if record.snapshot_id is not None:
                    repo.graph.add_edge(derivation, record.snapshot_id, "PRODUCED")
        evaluate_on_version(repo, version_id)
        repo.graph.flush()
        return version_id


# ----------------------------------------------------------------------
# grid runs

def format_param(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def domain_values(start, stop, step) -> list[float]:
    if step <= 0 or start > stop:
        raise TemplateError(f"bad numeric domain: start={start} stop={stop} step={step}")
    values = []
    v = float(start)
    while v <= stop + 1e-9:
        values.append(v)
        v += step
    return values


def substitute(command: str, bindings, combo) -> str:
    pieces = sorted(zip(bindings, combo), key=lambda p: p[0].span[0], reverse=True)
    out = command
    for binding, value in pieces:
        a, b = binding.span
        out = out[:a] + format_param(value) + out[b:]
    return out


def template_from_derivation(repo, derivation_id, params) -> DerivationTemplate:
    """Build a grid template from a recorded derivation.

    `params` is a list of (key, values). The substitution site for a key is
    the first free occurrence of the derivation property's value (when the
    key names a scalar property) or of the key text itself.
    """
    node = repo.graph.get_node(derivation_id)
    command = node.value("cmdline")
    if not command:
        raise TemplateError(f"derivation {derivation_id} has no recorded command")
    bindings = []
    claimed = []
    for key, values in params:
        placeholder = None
        prop = node.value(key)
        if isinstance(prop, str):
            placeholder = prop
        elif isinstance(prop, float):
            placeholder = format_param(prop)
        candidates = [placeholder] if placeholder else []
        candidates.append(key)
        span = None
        for text in candidates:
            span = _find_free_span(command, text, claimed)
            if span:
                break
        if not span:
            raise TemplateError(f"no substitution site for parameter {key!r} in {command!r}")
        claimed.append(span)
        bindings.append(ParamBinding(key, span, list(values)))
    template = DerivationTemplate(command, bindings, derivation_id=derivation_id)
    template.validate()
    return template


def _find_free_span(command, text, claimed):
    start = 0
    while True:
        i = command.find(text, start)
        if i < 0:
            return None
        span = (i, i + len(text))
        if all(span[1] <= a or span[0] >= b for a, b in claimed):
            return span
        start = i + 1


def run_grid(repo, template: DerivationTemplate, cap=GRID_CAP, env=None) -> list[CaptureResult]:
    """Run one capture per combination, in lexicographic domain order."""
    template.validate()
    total = 1
    for binding in template.bindings:
        total *= len(binding.values)
    if total > cap:
        raise GridCapError(f"grid of {total} combinations exceeds cap {cap}")
    grid_id = f"grid-{uuid.uuid4().hex[:8]}"
    results = []
    for combo in itertools.product(*(b.values for b in template.bindings)):
        cmd = substitute(template.command, template.bindings, combo)
        result = run_captured(repo, cmd, env=env)
        with repo.lock():
            repo.graph.set_property(result.derivation_id, "grid_run_id", grid_id, "grid")
            if template.derivation_id is not None:
                repo.graph.set_property(result.derivation_id, "grid_base", float(template.derivation_id), "grid")
            for binding, value in zip(template.bindings, combo):
                repo.graph.set_property(result.derivation_id, f"param:{binding.key}", value, "grid")
        results.append(result)
    return results


# ----------------------------------------------------------------------
# capture internals (shared with file-view materialization)

def run_captured_internal(repo, pseudo_cmdline, writer, used_paths=(), extra_deltas=(), author=None):
    """Capture an in-process write as if it were a command.

    `writer` runs between the scans; the derivation records `pseudo_cmdline`.
    File-view materialization uses this so a materialization is itself a
    derivation with USED/PRODUCED edges and lineage deltas.
    """
    author = author or repo.author
    with repo.lock():
        rules = load_ignore_rules(repo.root)
        pre_state, _ = scan_workdir(repo.root, rules)
        external_version = _record_external_edits(repo, pre_state, author)
        t0 = time.monotonic()
        writer()
        duration_ms = (time.monotonic() - t0) * 1000.0
        post_state, _ = scan_workdir(repo.root, rules)
        changes = diff_states(pre_state, post_state)
        result = _record_capture(
            repo,
            cmdline=pseudo_cmdline,
            author=author,
            pre_entries=repo.head_state(),
            post_state=post_state,
            changes=changes,
            derivation_props={
                "cmdline": (pseudo_cmdline, "capture"),
                "exit_code": (0.0, "capture"),
                "duration_ms": (duration_ms, "capture"),
                "started_at": (time.time(), "capture"),
            },
            exit_code=0,
            duration_ms=duration_ms,
            used_paths=used_paths,
            extra_deltas=extra_deltas,
        )
        result.external_version_id = external_version
        return result


def _run_subshell(repo, cmdline, env, echo):
    shell = repo.config.get("shell") or os.environ.get("SHELL") or "/bin/sh"
    try:
        proc = subprocess.Popen(
            cmdline,
            shell=True,
            executable=shell,
            cwd=repo.root,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
    except OSError as exc:
        return 127, "", "", f"cannot spawn {shell}: {exc}"

    heads = {}

    def _drain(stream, name, mirror):
        head = b""
        while True:
            chunk = stream.read(8192)
            if not chunk:
                break
            if len(head) < OUTPUT_HEAD_BYTES:
                head += chunk[: OUTPUT_HEAD_BYTES - len(head)]
            if mirror is not None:
                mirror.write(chunk)
                mirror.flush()
        heads[name] = head

    threads = [
        threading.Thread(
            target=_drain, args=(proc.stdout, "out", sys.stdout.buffer if echo else None), daemon=True
        ),
        threading.Thread(
            target=_drain, args=(proc.stderr, "err", sys.stderr.buffer if echo else None), daemon=True
        ),
    ]
    for t in threads:
        t.start()
    exit_code = proc.wait()
    for t in threads:
        t.join()
    return (
        exit_code,
        heads.get("out", b"").decode("utf-8", "replace"),
        heads.get("err", b"").decode("utf-8", "replace"),
        None,
    )


def _record_external_edits(repo, pre_state, author):
    """Mint a provenance-less version if the tree drifted since the head."""
    head_entries = repo.head_state()
    drift = diff_states(head_entries, pre_state)
    if not drift:
        return None
    records, state_tree = _mint_snapshots(repo, drift, head_entries, pre_state)
    version_id = _mint_version(
        repo,
        kind="Implicit",
        author=author,
        message=None,
        has_provenance=False,
        state_tree=state_tree,
        records=records,
        parent=repo.head_version(),
    )
    derivation = repo.graph.add_node("Derivation", {"missing": (True, "capture")})
    repo.graph.add_edge(derivation, version_id, "IN_VERSION")
    for record in records:
        if record.snapshot_id is not None:
            repo.graph.add_edge(derivation, record.snapshot_id, "PRODUCED")
    evaluate_on_version(repo, version_id)
    return version_id


def _mint_snapshots(repo, changes, head_entries, scan_state):
    """Store changed content, mint Snapshot nodes, build the new state tree."""
    state_tree = {
        path: {"hash": e.digest, "snapshot": float(e.snapshot_id), "size": float(e.size)}
        for path, e in head_entries.items()
    }
    records = []
    now = time.time()
    for change in changes:
        if change.kind == "deleted":
            state_tree.pop(change.path, None)
            records.append(ChangeRecord(change.path, "deleted", None))
            continue
        stat = scan_state[change.path]
        data = entry_bytes(repo.root, change.path, stat)
        digest = repo.store.put(data)
        snapshot_id = repo.graph.add_node(
            "Snapshot",
            {
                "content": (digest, "capture"),
                "path": (change.path, "capture"),
                "size": (float(len(data)), "capture"),
                "timestamp": (now, "capture"),
            },
        )
        artifact_id = _ensure_artifact(repo, change.path, stat)
        repo.graph.add_edge(snapshot_id, artifact_id, "OF_ARTIFACT")
        prev = head_entries.get(change.path)
        if prev is not None:
            repo.graph.add_edge(snapshot_id, prev.snapshot_id, "PARENT_SNAPSHOT")
        state_tree[change.path] = {"hash": digest, "snapshot": float(snapshot_id), "size": float(len(data))}
        records.append(ChangeRecord(change.path, change.kind, snapshot_id))
    return records, state_tree


def _ensure_artifact(repo, path, stat):
    node = repo.artifact_by_path(path)
    if node is not None:
        return node.id
    return repo.graph.add_node(
        "Artifact", {"path": (path, "capture"), "tag": (_artifact_tag(path, stat), "capture")}
    )


def _artifact_tag(path, stat) -> str:
    if stat is not None and stat.is_dir:
        return "other"
    ext = Path(path).suffix.lower()
    if ext in (".py", ".sh", ".r", ".jl", ".pl", ".c", ".cpp", ".js", ".ts", ".sql"):
        return "script"
    if ext in (".log", ".out"):
        return "result"
    if ext in (".csv", ".tsv", ".txt", ".json", ".dat", ".parquet"):
        return "data"
    return "other"


def _mint_version(repo, *, kind, author, message, has_provenance, state_tree, records, parent):
    props = {
        "kind": (kind, "capture"),
        "timestamp": (time.time(), "capture"),
        "author": (author, "capture"),
        "has_provenance": (has_provenance, "capture"),
        "state": (state_tree, "capture"),
        "deleted": ([r.path for r in records if r.kind == "deleted"], "capture"),
    }
    if message is not None:
        props["message"] = (message, "capture")
    version_id = repo.graph.add_node("Version", props)
    if parent is not None:
        repo.graph.add_edge(version_id, parent, "PARENT_VERSION")
    for record in records:
        if record.snapshot_id is not None:
            repo.graph.add_edge(version_id, record.snapshot_id, "HAS_SNAPSHOT")
    return version_id


def _record_capture(
    repo,
    *,
    cmdline,
    author,
    pre_entries,
    post_state,
    changes,
    derivation_props,
    exit_code,
    duration_ms,
    used_paths=(),
    extra_deltas=(),
):
    records, state_tree = _mint_snapshots(repo, changes, pre_entries, post_state)
    collapse = repo.config.get("collapse_empty", "false").lower() == "true"
    if not records and collapse and repo.head_version() is not None:
        version_id = repo.head_version()
    else:
        version_id = _mint_version(
            repo,
            kind="Implicit",
            author=author,
            message=None,
            has_provenance=True,
            state_tree=state_tree,
            records=records,
            parent=repo.head_version(),
        )

    derivation = repo.graph.add_node("Derivation", derivation_props)
    repo.graph.add_edge(derivation, version_id, "IN_VERSION")
    snap_by_path = {}
    for record in records:
        if record.snapshot_id is not None:
            repo.graph.add_edge(derivation, record.snapshot_id, "PRODUCED")
            snap_by_path[record.path] = record.snapshot_id

    for path in _used_snapshot_paths(repo, cmdline, pre_entries, used_paths):
        repo.graph.add_edge(derivation, pre_entries[path].snapshot_id, "USED")

    ctx = CaptureContext(cmdline=cmdline, workdir=str(repo.root), phase="after", changed=changes)
    for delta in list(extra_deltas) + dispatch(repo, ctx):
        _apply_delta(repo, derivation, snap_by_path, delta)

    evaluate_on_version(repo, version_id)
    repo.graph.flush()
    return CaptureResult(
        version_id=version_id,
        derivation_id=derivation,
        changed=records,
        exit_code=exit_code,
        duration_ms=duration_ms,
        cmdline=cmdline,
    )


def _used_snapshot_paths(repo, cmdline, pre_entries, used_paths):
    """Approximate the command's inputs: operands/option-args naming files
    that existed at pre-scan, plus explicitly declared paths."""
    found = []
    for path in used_paths:
        if path in pre_entries and path not in found:
            found.append(path)
    try:
        commands = posix_parse(cmdline)
    except Exception:
        return found
    candidates = []
    for parsed in commands:
        for token in file_candidates(parsed):
            candidates.append(token)
            if " " in token:
                # `sh -c '...'` style: the operand is itself a command line
                try:
                    for inner in posix_parse(token):
                        candidates.extend(file_candidates(inner))
                except Exception:
                    pass
    for token in candidates:
        rel = _normalize_rel(repo.root, token)
        if rel and rel in pre_entries and rel not in found:
            found.append(rel)
    return found


def _normalize_rel(root, token):
    if not token or token.startswith("-"):
        return None
    p = Path(token)
    if p.is_absolute():
        try:
            return p.resolve().relative_to(Path(root).resolve()).as_posix()
        except ValueError:
            return None
    return os.path.normpath(token).replace(os.sep, "/")


def _apply_delta(repo, derivation_id, snap_by_path, delta: PropertyDelta):
    if delta.target == "derivation":
        target = derivation_id
    else:
        _, path = delta.target
        target = snap_by_path.get(path)
        if target is None:
            repo.graph.set_property(
                derivation_id,
                f"ingestor_warning@{delta.source}",
                f"snapshot selector {path!r} did not match a changed file",
                delta.source,
            )
            return
    node = repo.graph.get_node(target)
    for key, value in delta.entries.items():
        existing = node.properties.get(key)
        if existing is not None and existing.source != delta.source:
            key = f"{key}@{delta.source}"  # keep both writers, source-qualified
        repo.graph.set_property(target, key, value, delta.source)
    if delta.record_lineage:
        _attach_record_lineage(repo, derivation_id, delta)


def _attach_record_lineage(repo, derivation_id, delta):
    tree = repo.graph.get_node(derivation_id).value("record_lineage") or {}
    rows = 0
    for out_path, out_row, witnesses in delta.record_lineage:
        per_file = tree.setdefault(out_path, {})
        per_file[str(int(out_row))] = [[path, float(row)] for path, row in witnesses]
        rows += 1
    total_rows = sum(len(v) for v in tree.values())
    if total_rows > LINEAGE_SIDECAR_ROWS:
        sidecar = repo.meta / "lineage" / str(derivation_id)
        write_lineage_sidecar(sidecar, tree)
        repo.graph.set_property(derivation_id, "record_lineage_sidecar", sidecar.name, delta.source)
        repo.graph.set_property(
            derivation_id, "record_lineage_rows", float(total_rows), delta.source
        )
    else:
        repo.graph.set_property(derivation_id, "record_lineage", tree, delta.source)


def write_lineage_sidecar(path, tree):
    """Compact binary lineage: rows of (out path, out row, witness list)."""
    with open(path, "wb") as fh:
        fh.write(b"PTLN\x01")
        entries = [
            (out_path, int(row), witnesses)
            for out_path, rows in sorted(tree.items())
            for row, witnesses in sorted(rows.items(), key=lambda kv: int(kv[0]))
        ]
        fh.write(struct.pack(">I", len(entries)))
        for out_path, row, witnesses in entries:
            pb = out_path.encode("utf-8")
            fh.write(struct.pack(">H", len(pb)) + pb + struct.pack(">II", row, len(witnesses)))
            for in_path, in_row in witnesses:
                ib = in_path.encode("utf-8")
                fh.write(struct.pack(">H", len(ib)) + ib + struct.pack(">I", int(in_row)))


def read_lineage_sidecar(path):
    tree = {}
    with open(path, "rb") as fh:
        if fh.read(5) != b"PTLN\x01":
            raise ValueError(f"not a lineage sidecar: {path}")
        (count,) = struct.unpack(">I", fh.read(4))
        for _ in range(count):
            (plen,) = struct.unpack(">H", fh.read(2))
            out_path = fh.read(plen).decode("utf-8")
            row, nwit = struct.unpack(">II", fh.read(8))
            witnesses = []
            for _ in range(nwit):
                (ilen,) = struct.unpack(">H", fh.read(2))
                in_path = fh.read(ilen).decode("utf-8")
                (in_row,) = struct.unpack(">I", fh.read(4))
                witnesses.append([in_path, float(in_row)])
            tree.setdefault(out_path, {})[str(row)] = witnesses
    return tree
