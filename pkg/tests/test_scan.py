import hashlib
import os
import random

from provtrail.scan import (
    DIR_PLACEHOLDER,
    Change,
    diff_states,
    is_ignored,
    scan_workdir,
)


def test_empty_workdir(tmp_path):
    state, warnings = scan_workdir(tmp_path)
    assert state == {}
    assert warnings == []


def test_new_file_then_edit(tmp_path):
    (tmp_path / "a.txt").write_text("one")
    state1, _ = scan_workdir(tmp_path)
    assert list(state1) == ["a.txt"]
    first = state1["a.txt"].digest

    (tmp_path / "a.txt").write_text("two")
    state2, _ = scan_workdir(tmp_path)
    assert state2["a.txt"].digest != first


def test_matches_independent_walk_oracle(tmp_path):
    rng = random.Random(3)
    expected = {}
    for i in range(50):
        sub = rng.choice(["", "d1", "d1/d2", "d3"])
        rel = os.path.join(sub, f"f{i}.bin") if sub else f"f{i}.bin"
        full = tmp_path / rel
        full.parent.mkdir(parents=True, exist_ok=True)
        data = rng.randbytes(rng.randrange(0, 200))
        full.write_bytes(data)
        expected[rel.replace(os.sep, "/")] = hashlib.sha256(data).hexdigest()
    # oracle: the test's own walk+digest map (files only)
    state, warnings = scan_workdir(tmp_path)
    assert warnings == []
    files = {p: s.digest for p, s in state.items() if not s.is_dir}
    assert files == expected
    # directories appear as placeholder entries
    dirs = {p for p, s in state.items() if s.is_dir}
    assert dirs == {"d1", "d1/d2", "d3"}
    dir_digest = hashlib.sha256(DIR_PLACEHOLDER).hexdigest()
    assert all(state[d].digest == dir_digest for d in dirs)


def test_provtrail_dir_always_ignored(tmp_path):
    (tmp_path / ".provtrail").mkdir()
    (tmp_path / ".provtrail" / "graph.log").write_text("x")
    state, _ = scan_workdir(tmp_path)
    assert state == {}


def test_ignore_rules(tmp_path):
    (tmp_path / ".provtrailignore").write_text("*.tmp\nbuild/\n")
    (tmp_path / "keep.txt").write_text("k")
    (tmp_path / "drop.tmp").write_text("d")
    (tmp_path / "build").mkdir()
    (tmp_path / "build" / "out.bin").write_text("o")
    state, _ = scan_workdir(tmp_path)
    assert set(state) == {"keep.txt", ".provtrailignore"}
    assert is_ignored("x/y/z.tmp", ["*.tmp"])


def test_symlink_recorded_by_target_not_followed(tmp_path):
    (tmp_path / "real.txt").write_text("content")
    os.symlink("real.txt", tmp_path / "alias")
    state, _ = scan_workdir(tmp_path)
    assert state["alias"].link_target == "real.txt"
    assert state["alias"].digest != state["real.txt"].digest

    os.remove(tmp_path / "alias")
    os.symlink("other.txt", tmp_path / "alias")
    state2, _ = scan_workdir(tmp_path)
    assert state2["alias"].digest != state["alias"].digest


def test_diff_states_kinds():
    class E:
        def __init__(self, digest):
            self.digest = digest

    old = {"a": E("1"), "b": E("2"), "c": E("3")}
    new = {"a": E("1"), "b": E("9"), "d": E("4")}
    assert diff_states(old, new) == [
        Change("b", "updated", "9"),
        Change("c", "deleted", None),
        Change("d", "created", "4"),
    ]
