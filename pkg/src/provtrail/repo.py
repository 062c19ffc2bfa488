"""Repository wiring: on-disk layout, config, the writer lock, open/discover.

Layout under ``<root>/.provtrail/``:

    objects/     content-addressed blobs (hash fan-out)
    graph.log    append-only mutation log (JSON lines)
    graph.idx    periodically rewritten materialized cache of the log
    config       key=value lines
    ingestors.json  registered external ingestors
    views.json      file-view registry
    lineage/     binary lineage sidecars for very large materializations
    lock         exclusive writer lock (exists while held)
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import AlreadyInitializedError, LockTimeoutError, NotARepositoryError, UnknownNodeError
from .graph import GraphStore
from .objects import ObjectStore

META_DIR = ".provtrail"

DEFAULT_CONFIG = {
    "hash_algorithm": "sha256",
    "collapse_empty": "false",
}


@dataclass
class StateEntry:
    digest: str
    snapshot_id: int
    size: int


class RepoLock:
    """Exclusive per-repository writer lock (lock file with pid), reentrant in-process."""

    def __init__(self, path):
        self.path = Path(path)
        self._depth = 0

    def acquire(self, timeout=10.0):
        if self._depth > 0:
            self._depth += 1
            return
        deadline = time.monotonic() + timeout
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                self._depth = 1
                return
            except FileExistsError:
                self._steal_if_stale()
                if time.monotonic() >= deadline:
                    raise LockTimeoutError(f"repository lock busy: {self.path}")
                time.sleep(0.05)

    def _steal_if_stale(self):
        try:
            pid = int(self.path.read_text().strip() or "0")
        except (OSError, ValueError):
            return
        if pid <= 0:
            return
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            self.path.unlink(missing_ok=True)
        except PermissionError:
            pass

    def release(self):
        if self._depth == 0:
            return
        self._depth -= 1
        if self._depth == 0:
            self.path.unlink(missing_ok=True)

    @property
    def held(self):
        return self._depth > 0


class _LockGuard:
    def __init__(self, repo, timeout):
        self.repo = repo
        self.timeout = timeout

    def __enter__(self):
        self.repo._lock.acquire(self.timeout)
        # catch up with any writer that ran while we were not holding the lock
        self.repo.graph.sync_for_write()
        return self.repo

    def __exit__(self, *exc):
        self.repo._lock.release()


class Repository:
    def __init__(self, root):
        self.root = Path(root).resolve()
        self.meta = self.root / META_DIR
        if not self.meta.is_dir():
            raise NotARepositoryError(f"not a provtrail repository: {self.root}")
        self.config = read_config(self.meta / "config")
        self.store = ObjectStore(self.meta / "objects", self.config.get("hash_algorithm", "sha256"))
        self.graph = GraphStore(self.meta / "graph.log", self.meta / "graph.idx")
        self._lock = RepoLock(self.meta / "lock")

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def create_layout(cls, root, author=None) -> "Repository":
        root = Path(root).resolve()
        meta = root / META_DIR
        if meta.exists():
            raise AlreadyInitializedError(f"already initialized: {root}")
        (meta / "objects").mkdir(parents=True)
        (meta / "lineage").mkdir()
        config = dict(DEFAULT_CONFIG)
        config["author"] = author or os.environ.get("USER", "anonymous")
        write_config(meta / "config", config)
        (meta / "graph.log").touch()
        (meta / "ingestors.json").write_text("[]\n", encoding="utf-8")
        (meta / "views.json").write_text("{}\n", encoding="utf-8")
        return cls(root)

    @classmethod
    def open(cls, root) -> "Repository":
        return cls(root)

    @classmethod
    def discover(cls, start=None) -> "Repository":
        override = os.environ.get("PROVTRAIL_REPO")
        if override:
            return cls(override)
        path = Path(start or os.getcwd()).resolve()
        for candidate in [path, *path.parents]:
            if (candidate / META_DIR).is_dir():
                return cls(candidate)
        raise NotARepositoryError(f"no {META_DIR} found in {path} or any parent")

    def close(self):
        self.graph.close()

    # ------------------------------------------------------------------
    # locking

    def lock(self, timeout=10.0):
        return _LockGuard(self, timeout)

    @property
    def author(self):
        return self.config.get("author", "anonymous")

    # ------------------------------------------------------------------
    # version helpers

    def head_version(self):
        """The most recent Version node id, or None before init completes."""
        head = None
        for node in self.graph.nodes("Version"):
            head = node.id
        return head

    def version_state(self, version_id) -> dict:
        """Workspace state recorded at a version: path -> StateEntry."""
        node = self.graph.get_node(version_id)
        tree = node.value("state") or {}
        out = {}
        for path, entry in tree.items():
            out[path] = StateEntry(entry["hash"], int(entry["snapshot"]), int(entry.get("size", 0)))
        return out

    def head_state(self) -> dict:
        head = self.head_version()
        return self.version_state(head) if head is not None else {}

    # ------------------------------------------------------------------
    # artifact helpers

    def artifact_by_path(self, path):
        for node in self.graph.nodes("Artifact"):
            if node.value("path") == path:
                return node
        return None

    def snapshots_of_artifact(self, artifact_id):
        """Snapshot nodes of an artifact in creation order."""
        snaps = [e.src for e in self.graph.in_edges(artifact_id, "OF_ARTIFACT")]
        return [self.graph.get_node(s) for s in sorted(snaps)]

    def snapshot_node(self, snapshot_id):
        node = self.graph.get_node(snapshot_id)
        if node.kind != "Snapshot":
            raise UnknownNodeError(f"node {snapshot_id} is a {node.kind}, not a Snapshot")
        return node

    def ingestors_path(self):
        return self.meta / "ingestors.json"

    def views_path(self):
        return self.meta / "views.json"

    def read_views(self) -> dict:
        try:
            return json.loads(self.views_path().read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return {}

    def write_views(self, views: dict):
        self.views_path().write_text(json.dumps(views, indent=1) + "\n", encoding="utf-8")


def read_config(path) -> dict:
    config = {}
    try:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            config[key.strip()] = value.strip()
    except OSError:
        pass
    return config


def write_config(path, config: dict):
    lines = [f"{k}={v}" for k, v in sorted(config.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
