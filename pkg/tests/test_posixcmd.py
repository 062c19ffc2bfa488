import pytest
from hypothesis import given, strategies as st

from provtrail.errors import CommandParseError
from provtrail.posixcmd import (
    ParsedCommand,
    file_candidates,
    posix_parse,
    reconstruct,
    strip_redirect,
    tokenize,
)


def cmd(utility, options=(), option_args=(), operands=(), pipeline=False):
    return {
        "utility": utility,
        "options": list(options),
        "option_args": [list(p) for p in option_args],
        "operands": list(operands),
        "pipeline": pipeline,
    }


def shape(parsed: ParsedCommand):
    return {
        "utility": parsed.utility,
        "options": parsed.options,
        "option_args": [list(p) for p in parsed.option_args],
        "operands": parsed.operands,
        "pipeline": parsed.pipeline,
    }


# The 30-case conformance table. Expected values hand-derived from the
# utility argument conventions the parser implements.
CASES = [
    ("mkdir -p dir", [cmd("mkdir", options=["p"], operands=["dir"])]),
    ("ls", [cmd("ls")]),
    ("sort f.txt | uniq -c", [cmd("sort", operands=["f.txt"], pipeline=True)]),
    ("cd a && ls b", [cmd("cd", operands=["a"]), cmd("ls", operands=["b"])]),
    ("echo one; echo two", [cmd("echo", operands=["one"]), cmd("echo", operands=["two"])]),
    ("ls -la", [cmd("ls", options=["l", "a"])]),
    ("rm -rf build", [cmd("rm", options=["r", "f"], operands=["build"])]),
    ("sort -k 2 data.csv", [cmd("sort", option_args=[("k", "2")], operands=["data.csv"])]),
    ("sort -k2 data.csv", [cmd("sort", option_args=[("k", "2")], operands=["data.csv"])]),
    ("cut -d, -f1 a.csv", [cmd("cut", option_args=[("d", ","), ("f", "1")], operands=["a.csv"])]),
    ("head -n 5 log", [cmd("head", option_args=[("n", "5")], operands=["log"])]),
    ("tar --file=out.tar -c dir", [cmd("tar", options=["c"], option_args=[("file", "out.tar")], operands=["dir"])]),
    ("git --no-pager log", [cmd("git", options=["no-pager"], operands=["log"])]),
    ("grep -rn pattern src", [cmd("grep", options=["r", "n"], operands=["pattern", "src"])]),
    ("grep -e expr file", [cmd("grep", option_args=[("e", "expr")], operands=["file"])]),
    ("echo 'hello world'", [cmd("echo", operands=["hello world"])]),
    ('echo "a b" c', [cmd("echo", operands=["a b", "c"])]),
    ("echo a\\ b", [cmd("echo", operands=["a b"])]),
    ("echo 'semi;colon'", [cmd("echo", operands=["semi;colon"])]),
    ("echo 'pipe|char'", [cmd("echo", operands=["pipe|char"])]),
    ('echo "and && and"', [cmd("echo", operands=["and && and"])]),
    ("cat a.txt > b.txt", [cmd("cat", operands=["a.txt", ">", "b.txt"])]),
    ("python3 -m pytest", [cmd("python3", option_args=[("m", "pytest")])]),
    ("python3 train.py --lr=0.1", [cmd("python3", option_args=[("lr", "0.1")], operands=["train.py"])]),
    ("ls -- -strange", [cmd("ls", operands=["-strange"])]),
    ("sort a.txt | uniq | wc -l", [cmd("sort", operands=["a.txt"], pipeline=True)]),
    ("true && false; echo end",
     [cmd("true"), cmd("false"), cmd("echo", operands=["end"])]),
    ("awk -F: '{print $1}' /etc/passwd",
     [cmd("awk", option_args=[("F", ":")], operands=["{print $1}", "/etc/passwd"])]),
    ("mkdir -p a; mkdir -p b",
     [cmd("mkdir", options=["p"], operands=["a"]), cmd("mkdir", options=["p"], operands=["b"])]),
    ("uniq -c sorted.txt", [cmd("uniq", options=["c"], operands=["sorted.txt"])]),
]


@pytest.mark.parametrize("line,expected", CASES, ids=[c[0] for c in CASES])
def test_conformance_table(line, expected):
    parsed = posix_parse(line)
    assert [shape(p) for p in parsed] == expected


def test_pipeline_keeps_raw_of_all_stages():
    (parsed,) = posix_parse("sort f.txt | uniq -c")
    assert parsed.raw == "sort f.txt | uniq -c"
    assert parsed.pipeline


def test_decomposition_keeps_per_command_raw():
    a, b = posix_parse("cd a && ls b")
    assert a.raw == "cd a"
    assert b.raw == "ls b"


def test_unterminated_quote_raises():
    with pytest.raises(CommandParseError):
        posix_parse("echo 'oops")
    with pytest.raises(CommandParseError):
        posix_parse('echo "oops')


def test_empty_line_raises():
    with pytest.raises(CommandParseError):
        posix_parse("   ")


_WORD_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789._/-"
_words = st.text(alphabet=_WORD_CHARS, min_size=1, max_size=8).filter(
    lambda w: not w.startswith("-")
)


@given(st.lists(_words, min_size=1, max_size=6), st.integers(0, 2))
def test_split_soundness(words, n_seps):
    # count of parsed commands == 1 + number of unquoted ;/&& separators
    seps = [";", "&&"][:1] * 0 or [";", "&&"]
    line = " ".join(words)
    for i in range(n_seps):
        line += f" {seps[i % 2]} " + " ".join(words)
    assert len(posix_parse(line)) == 1 + n_seps


@given(st.lists(_words, min_size=1, max_size=6))
def test_tokens_reconstruct_to_same_token_list(words):
    line = " ".join(words)
    (parsed,) = posix_parse(line)
    rebuilt, _ = tokenize(reconstruct(parsed))
    assert [v for v, _ in rebuilt] == parsed.tokens == words


@given(st.lists(_words, min_size=1, max_size=5))
def test_parse_is_idempotent_on_reconstruction(words):
    (first,) = posix_parse(" ".join(words))
    (second,) = posix_parse(reconstruct(first))
    assert shape(second) == shape(first)


def test_strip_redirect():
    assert strip_redirect(">out.txt") == "out.txt"
    assert strip_redirect("2>err.log") == "err.log"
    assert strip_redirect("<in.txt") == "in.txt"
    assert strip_redirect(">>append") == "append"
    assert strip_redirect("plain") == "plain"


def test_file_candidates():
    (parsed,) = posix_parse("sort -o out.txt in.txt")
    assert file_candidates(parsed) == ["in.txt", "out.txt"]
