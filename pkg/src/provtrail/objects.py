"""Content-addressed object store: immutable blobs under hash-fanout paths.

Layout: ``<root>/<first two hex chars>/<remaining hex chars>``. Writing the
same bytes twice stores one physical object.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

from .errors import StorageError, UnknownHashError


class ObjectStore:
    def __init__(self, root, algorithm="sha256"):
        self.root = Path(root)
        self.algorithm = algorithm
        self.root.mkdir(parents=True, exist_ok=True)

    def hash_bytes(self, data: bytes) -> str:
        return hashlib.new(self.algorithm, data).hexdigest()

    def _path_for(self, digest: str) -> Path:
        if len(digest) < 3:
            raise StorageError(f"malformed object hash: {digest!r}")
        return self.root / digest[:2] / digest[2:]

    def put(self, data: bytes) -> str:
        """Store bytes, return their hex digest. Idempotent."""
        digest = self.hash_bytes(data)
        path = self._path_for(digest)
        if path.exists():
            return digest
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.parent / f".tmp-{os.getpid()}-{digest[2:10]}"
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            raise StorageError(f"cannot store object {digest}: {exc}") from exc
        return digest

    def get(self, digest: str) -> bytes:
        path = self._path_for(digest)
        try:
            with open(path, "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            raise UnknownHashError(f"no object with hash {digest}") from None

    def __contains__(self, digest: str) -> bool:
        return self._path_for(digest).exists()

    def count(self) -> int:
        n = 0
        for fan in self.root.iterdir():
            if fan.is_dir():
                n += sum(1 for f in fan.iterdir() if f.is_file() and not f.name.startswith(".tmp-"))
        return n
