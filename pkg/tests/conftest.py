import os

import pytest

from provtrail.capture import init_repo


@pytest.fixture(autouse=True)
def _no_recursion_env(monkeypatch):
    # tests may themselves run under a wrapped environment
    monkeypatch.delenv("PROVTRAIL_ACTIVE", raising=False)
    monkeypatch.delenv("PROVTRAIL_REPO", raising=False)


@pytest.fixture
def workdir(tmp_path):
    return tmp_path / "project"


@pytest.fixture
def repo(workdir):
    workdir.mkdir()
    r = init_repo(workdir, author="tester")
    yield r
    r.close()


def write(root, relpath, text):
    path = root / relpath
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    # mtime-insensitive change detection is by digest, but keep scans distinct
    os.utime(path)
    return path
