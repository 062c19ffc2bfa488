"""Shell command-line parsing following POSIX utility argument conventions.

A command line is split on unquoted ``;`` / ``&&`` into separate commands;
a pipeline stays one command whose utility is the first stage's utility and
whose raw text keeps all stages. Single-dash flag clusters split into
characters; ``--long=value`` becomes an option argument. Whether a token
following a flag is that flag's argument or an operand is undecidable
without per-utility knowledge, so a hint table of common utilities decides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CommandParseError

# utility -> single-char flags that consume an argument
OPTION_ARG_FLAGS = {
    "awk": {"F", "v", "f"},
    "cc": {"o", "I", "L", "D"},
    "cp": {"t"},
    "curl": {"o", "H", "d", "X", "u"},
    "cut": {"d", "f", "c", "b"},
    "gcc": {"o", "I", "L", "D"},
    "git": {"C", "c"},
    "grep": {"e", "f", "m", "A", "B", "C"},
    "head": {"n", "c"},
    "join": {"t", "j"},
    "make": {"f", "j", "C"},
    "mkfifo": {"m"},
    "mkdir": {"m"},
    "mv": {"t"},
    "python": {"c", "m"},
    "python3": {"c", "m"},
    "sed": {"e", "f"},
    "sort": {"k", "t", "o"},
    "ssh": {"p", "i", "l", "o"},
    "tail": {"n", "c"},
    "uniq": {"f", "w"},
    "wget": {"O", "P"},
    "xargs": {"n", "I", "P"},
}

_WORD = "word"
_OP = "op"


@dataclass
class ParsedCommand:
    utility: str
    options: list = field(default_factory=list)
    option_args: list = field(default_factory=list)  # (flag, argument) pairs
    operands: list = field(default_factory=list)
    pipeline: bool = False
    raw: str = ""
    tokens: list = field(default_factory=list)  # word tokens of the whole command


def tokenize(text: str):
    """Split into (value, kind) tokens; kind is 'word' or 'op' (;, &&, |, ||).

    Quote removal happens here: 'a b' and "a b" become one word token a b.
    Raises CommandParseError on an unterminated quote.
    """
    tokens = []
    spans = []
    buf = []
    start = None
    i = 0
    n = len(text)

    def flush(end):
        nonlocal start
        if start is not None:
            tokens.append(("".join(buf), _WORD))
            spans.append((start, end))
            buf.clear()
            start = None

    while i < n:
        ch = text[i]
        if ch == "'":
            if start is None:
                start = i
            end = text.find("'", i + 1)
            if end < 0:
                raise CommandParseError("unterminated single quote", position=i)
            buf.append(text[i + 1 : end])
            i = end + 1
        elif ch == '"':
            if start is None:
                start = i
            i += 1
            closed = False
            while i < n:
                c = text[i]
                if c == "\\" and i + 1 < n and text[i + 1] in '"\\$`':
                    buf.append(text[i + 1])
                    i += 2
                elif c == '"':
                    closed = True
                    i += 1
                    break
                else:
                    buf.append(c)
                    i += 1
            if not closed:
                raise CommandParseError("unterminated double quote", position=i)
        elif ch == "\\":
            if i + 1 >= n:
                raise CommandParseError("trailing backslash", position=i)
            if start is None:
                start = i
            buf.append(text[i + 1])
            i += 2
        elif ch in " \t":
            flush(i)
            i += 1
        elif ch in ";|&":
            flush(i)
            if ch == "&" and i + 1 < n and text[i + 1] == "&":
                tokens.append(("&&", _OP))
                spans.append((i, i + 2))
                i += 2
            elif ch == "|" and i + 1 < n and text[i + 1] == "|":
                tokens.append(("||", _OP))
                spans.append((i, i + 2))
                i += 2
            elif ch == "&":
                # lone & (background job) is kept as a word operand
                if start is None:
                    start = i
                buf.append(ch)
                i += 1
            else:
                tokens.append((ch, _OP))
                spans.append((i, i + 1))
                i += 1
        else:
            if start is None:
                start = i
            buf.append(ch)
            i += 1
    flush(n)
    return tokens, spans


def posix_parse(cmdline: str):
    """Parse a command line into one ParsedCommand per ;/&& separated command."""
    if not cmdline or not cmdline.strip():
        raise CommandParseError("empty command line")
    tokens, spans = tokenize(cmdline)

    # split into command segments on ; and &&
    segments = []
    current = []
    seg_start = None
    seg_end = None
    for (value, kind), (a, b) in zip(tokens, spans):
        if kind == _OP and value in (";", "&&"):
            if current:
                segments.append((current, seg_start, seg_end))
            current, seg_start, seg_end = [], None, None
        else:
            if seg_start is None:
                seg_start = a
            seg_end = b
            current.append((value, kind))
    if current:
        segments.append((current, seg_start, seg_end))

    commands = []
    for seg_tokens, a, b in segments:
        raw = cmdline[a:b]
        commands.append(_parse_segment(seg_tokens, raw))
    return commands


def _parse_segment(seg_tokens, raw):
    pipeline = any(kind == _OP for _, kind in seg_tokens)  # only | and || remain here
    # first pipeline stage carries the parsed structure
    stage = []
    for value, kind in seg_tokens:
        if kind == _OP:
            break
        stage.append(value)
    words = [v for v, k in seg_tokens if k == _WORD]
    if not stage:
        raise CommandParseError(f"command segment starts with a pipe: {raw!r}")

    utility = stage[0]
    arg_flags = OPTION_ARG_FLAGS.get(utility, set())
    options = []
    option_args = []
    operands = []
    i = 1
    only_operands = False
    while i < len(stage):
        tok = stage[i]
        if only_operands:
            operands.append(tok)
        elif tok == "--":
            only_operands = True
        elif tok.startswith("--") and len(tok) > 2:
            name, eq, value = tok[2:].partition("=")
            if eq:
                option_args.append((name, value))
            else:
                options.append(name)
        elif tok.startswith("-") and len(tok) > 1:
            body = tok[1:]
            if body[0] in arg_flags and len(body) > 1:
                option_args.append((body[0], body[1:]))
            else:
                for ch in body[:-1]:
                    options.append(ch)
                last = body[-1]
                if last in arg_flags and i + 1 < len(stage):
                    option_args.append((last, stage[i + 1]))
                    i += 1
                else:
                    options.append(last)
        else:
            operands.append(tok)
        i += 1

    return ParsedCommand(
        utility=utility,
        options=options,
        option_args=option_args,
        operands=operands,
        pipeline=pipeline,
        raw=raw,
        tokens=words,
    )


def shell_quote(token: str) -> str:
    if token and not any(c in token for c in " \t'\";|&\\"):
        return token
    return "'" + token.replace("'", "'\\''") + "'"


def reconstruct(parsed: ParsedCommand) -> str:
    """Rebuild a command string from the stored word tokens (canonical spacing)."""
    return " ".join(shell_quote(t) for t in parsed.tokens)


def strip_redirect(token: str) -> str:
    """Drop a leading redirection prefix (``<``, ``>``, ``2>``, ``>>`` ...)."""
    i = 0
    while i < len(token) and token[i].isdigit():
        i += 1
    if i < len(token) and token[i] in "<>":
        while i < len(token) and token[i] in "<>":
            i += 1
        return token[i:]
    return token


def file_candidates(parsed: ParsedCommand) -> list[str]:
    """Tokens that may name input files, for USED-edge approximation."""
    seen = []
    for tok in parsed.operands + [arg for _, arg in parsed.option_args]:
        cand = strip_redirect(tok)
        if cand and cand not in seen:
            seen.append(cand)
    return seen
