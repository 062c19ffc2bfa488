"""Working-directory scanning and change detection.

A scan maps every tracked path to a content digest. Directories are recorded
as placeholder entries with the digest of a sentinel byte string; symbolic
links are recorded by their target path string, never followed. `.provtrail/`
and anything matched by `.provtrailignore` globs are excluded.
"""

from __future__ import annotations

import fnmatch
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .repo import META_DIR

DIR_PLACEHOLDER = b"@directory@"
IGNORE_FILE = ".provtrailignore"


@dataclass(frozen=True)
class FileStat:
    digest: str
    size: int
    mtime: float
    is_dir: bool = False
    link_target: str | None = None


@dataclass(frozen=True)
class Change:
    path: str
    kind: str  # created | updated | deleted
    digest: str | None = None


def load_ignore_rules(root) -> list[str]:
    rules = []
    try:
        for line in (Path(root) / IGNORE_FILE).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                rules.append(line)
    except OSError:
        pass
    return rules


def is_ignored(relpath: str, rules) -> bool:
    parts = relpath.split("/")
    if parts[0] == META_DIR:
        return True
    for rule in rules:
        if "/" in rule:
            if fnmatch.fnmatch(relpath, rule.rstrip("/")):
                return True
        else:
            if any(fnmatch.fnmatch(part, rule) for part in parts):
                return True
    return False


def _hash_file(path, algorithm) -> str:
    digest = hashlib.new(algorithm)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def link_bytes(target: str) -> bytes:
    return b"@link:" + target.encode("utf-8", "surrogateescape")


def scan_workdir(root, rules=None, algorithm="sha256"):
    """Scan a repository working directory.

    Returns (state, warnings): state maps repository-relative paths to
    FileStat; warnings lists unreadable paths (recorded, never fatal).
    """
    root = Path(root)
    if rules is None:
        rules = load_ignore_rules(root)
    state: dict[str, FileStat] = {}
    warnings: list[str] = []
    dir_digest = hashlib.new(algorithm, DIR_PLACEHOLDER).hexdigest()

    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        rel_dir = os.path.relpath(dirpath, root)
        kept = []
        for name in sorted(dirnames):
            rel = name if rel_dir == "." else f"{rel_dir}/{name}"
            if is_ignored(rel, rules):
                continue
            full = os.path.join(dirpath, name)
            if os.path.islink(full):
                target = os.readlink(full)
                digest = hashlib.new(algorithm, link_bytes(target)).hexdigest()
                st = os.lstat(full)
                state[rel] = FileStat(digest, len(target), st.st_mtime, link_target=target)
                continue  # do not descend through the link
            st = os.lstat(full)
            state[rel] = FileStat(dir_digest, 0, st.st_mtime, is_dir=True)
            kept.append(name)
        dirnames[:] = kept
        for name in sorted(filenames):
            rel = name if rel_dir == "." else f"{rel_dir}/{name}"
            if is_ignored(rel, rules):
                continue
            full = os.path.join(dirpath, name)
            try:
                st = os.lstat(full)
                if os.path.islink(full):
                    target = os.readlink(full)
                    digest = hashlib.new(algorithm, link_bytes(target)).hexdigest()
                    state[rel] = FileStat(digest, len(target), st.st_mtime, link_target=target)
                else:
                    state[rel] = FileStat(_hash_file(full, algorithm), st.st_size, st.st_mtime)
            except OSError as exc:
                warnings.append(f"{rel}: {exc.strerror or exc}")
    return state, warnings


def entry_bytes(root, path: str, stat: FileStat) -> bytes:
    """The bytes that represent one scan entry in the object store."""
    if stat.is_dir:
        return DIR_PLACEHOLDER
    if stat.link_target is not None:
        return link_bytes(stat.link_target)
    with open(Path(root) / path, "rb") as fh:
        return fh.read()


def diff_states(old: dict, new: dict) -> list[Change]:
    """Changes from `old` to `new`, compared by digest, sorted by path.

    Both arguments map path -> object with a `digest` attribute (FileStat or
    StateEntry).
    """
    changes = []
    for path in sorted(set(old) | set(new)):
        before = old.get(path)
        after = new.get(path)
        if before is None:
            changes.append(Change(path, "created", after.digest))
        elif after is None:
            changes.append(Change(path, "deleted", None))
        elif before.digest != after.digest:
            changes.append(Change(path, "updated", after.digest))
    return changes
