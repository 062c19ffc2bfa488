"""File views: virtual or materialized transformations over delimited text
files, defined in a small SQL dialect, with record-level lineage for every
output row.

Dialect (keywords case-insensitive):

    SELECT <item> [, <item>]* | *
    FROM {path} [AS] alias [, {path} [AS] alias]*
    [WHERE col ⊙ (col | literal) [AND ...]]        ⊙ ∈ = != < <= > >=
    [GROUP BY col [, col]*]

Items are `alias._cN` column references (optionally renamed with AS) or the
aggregates COUNT(*), COUNT(col), SUM, MIN, MAX, AVG. Input files are
comma-separated, headerless, unquoted; columns are `_c0..`. Comparisons
coerce both sides to numbers when both parse numerically, else compare as
strings. No ORDER BY, HAVING, OR, subqueries or NULLs: empty fields are
empty strings.

Evaluation is in-memory nested-loop so lineage falls out exactly: SPJ rows
carry one witness per input alias, GROUP BY rows carry every row of the
group. Materialization writes through the capture machinery, so it is itself
a derivation with USED/PRODUCED edges and the lineage attached.
"""

from __future__ import annotations

import itertools
import re
import time
from dataclasses import dataclass, field

from .capture import run_captured_internal
from .errors import EvaluationError, NameCollisionError, SqlParseError, UnknownViewError
from .ingest import PropertyDelta

AGG_FUNCS = ("count", "sum", "min", "max", "avg")
_COL_RE = re.compile(r"^_c(\d+)$")


@dataclass(frozen=True)
class ColRef:
    alias: str | None
    index: int


@dataclass(frozen=True)
class Aggregate:
    func: str
    arg: ColRef | None  # None only for COUNT(*)


@dataclass(frozen=True)
class SelectItem:
    expr: object  # ColRef | Aggregate
    name: str | None = None  # AS rename


@dataclass(frozen=True)
class Comparison:
    left: object  # ColRef | literal (str | float)
    op: str
    right: object


@dataclass
class ViewQuery:
    select: list | str  # list of SelectItem, or "*"
    from_list: list  # (path, alias) pairs
    where: list = field(default_factory=list)
    group_by: list = field(default_factory=list)

    @property
    def aliases(self):
        return [a for _, a in self.from_list]


# ----------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<brace>\{[^}]*\})
  | (?P<string>'[^']*')
  | (?P<number>-?\d+(\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>!=|<=|>=|[=<>(),.*])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SqlParseError(f"unexpected character {text[pos]!r}", position=pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def keyword(self, *words) -> bool:
        kind, value, _ = self.peek()
        if kind == "ident" and value.upper() in words:
            self.i += 1
            return True
        return False

    def expect_keyword(self, word):
        if not self.keyword(word):
            _, value, pos = self.peek()
            raise SqlParseError(f"expected {word}, got {value!r}", position=pos)

    def expect_op(self, op):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise SqlParseError(f"expected {op!r}, got {value!r}", position=pos)
        self.i += 1

    def at_op(self, op) -> bool:
        kind, value, _ = self.peek()
        return kind == "op" and value == op


def parse_view_sql(text: str) -> ViewQuery:
    if not text or not text.strip():
        raise SqlParseError("empty query")
    p = _Parser(text)
    p.expect_keyword("SELECT")
    select = _parse_select_list(p)
    p.expect_keyword("FROM")
    from_list = _parse_from_list(p)
    where = []
    group_by = []
    if p.keyword("WHERE"):
        where = _parse_where(p)
    if p.keyword("GROUP"):
        p.expect_keyword("BY")
        group_by = _parse_col_list(p)
    kind, value, pos = p.peek()
    if kind is not None:
        raise SqlParseError(f"trailing input {value!r}", position=pos)
    query = ViewQuery(select, from_list, where, group_by)
    _validate(query, text)
    return query


def _parse_select_list(p):
    if p.at_op("*"):
        p.next()
        return "*"
    items = []
    while True:
        kind, value, pos = p.peek()
        if kind == "ident" and value.lower() in AGG_FUNCS and p.tokens[p.i + 1 : p.i + 2] and (
            p.tokens[p.i + 1][0] == "op" and p.tokens[p.i + 1][1] == "("
        ):
            func = value.lower()
            p.next()
            p.expect_op("(")
            if p.at_op("*"):
                if func != "count":
                    raise SqlParseError(f"{func}(*) is not supported", position=pos)
                p.next()
                expr = Aggregate("count", None)
            else:
                expr = Aggregate(func, _parse_colref(p))
            p.expect_op(")")
        else:
            expr = _parse_colref(p)
        name = None
        if p.keyword("AS"):
            kind, value, pos = p.next()
            if kind != "ident":
                raise SqlParseError(f"expected name after AS, got {value!r}", position=pos)
            name = value
        items.append(SelectItem(expr, name))
        if p.at_op(","):
            p.next()
            continue
        return items


def _parse_colref(p) -> ColRef:
    kind, value, pos = p.next()
    if kind != "ident":
        raise SqlParseError(f"expected column reference, got {value!r}", position=pos)
    if p.at_op("."):
        p.next()
        kind2, col, pos2 = p.next()
        m = _COL_RE.match(col or "")
        if kind2 != "ident" or not m:
            raise SqlParseError(f"expected _cN after {value}., got {col!r}", position=pos2)
        return ColRef(value, int(m.group(1)))
    m = _COL_RE.match(value)
    if not m:
        raise SqlParseError(f"expected column reference, got {value!r}", position=pos)
    return ColRef(None, int(m.group(1)))


def _parse_from_list(p):
    pairs = []
    while True:
        kind, value, pos = p.next()
        if kind != "brace":
            raise SqlParseError(f"expected {{path}}, got {value!r}", position=pos)
        path = value[1:-1].strip()
        if not path:
            raise SqlParseError("empty path in braces", position=pos)
        p.keyword("AS")  # optional
        kind2, alias, pos2 = p.next()
        if kind2 != "ident":
            raise SqlParseError(f"expected alias, got {alias!r}", position=pos2)
        pairs.append((path, alias))
        if p.at_op(","):
            p.next()
            continue
        return pairs


def _parse_where(p):
    comparisons = [_parse_comparison(p)]
    while p.keyword("AND"):
        comparisons.append(_parse_comparison(p))
    return comparisons


def _parse_comparison(p):
    left = _parse_operand(p)
    kind, op, pos = p.next()
    if kind != "op" or op not in ("=", "!=", "<", "<=", ">", ">="):
        raise SqlParseError(f"expected comparison operator, got {op!r}", position=pos)
    right = _parse_operand(p)
    if not isinstance(left, ColRef) and not isinstance(right, ColRef):
        raise SqlParseError("comparison needs at least one column", position=pos)
    return Comparison(left, op, right)


def _parse_operand(p):
    kind, value, pos = p.peek()
    if kind == "string":
        p.next()
        return value[1:-1]
    if kind == "number":
        p.next()
        return float(value)
    return _parse_colref(p)


def _parse_col_list(p):
    cols = [_parse_colref(p)]
    while p.at_op(","):
        p.next()
        cols.append(_parse_colref(p))
    return cols


def _validate(query: ViewQuery, text):
    aliases = query.aliases
    if len(set(aliases)) != len(aliases):
        raise SqlParseError(f"duplicate table alias in {aliases}")
    known = set(aliases)

    def check_ref(ref: ColRef):
        if ref.alias is not None and ref.alias not in known:
            raise SqlParseError(f"unknown alias {ref.alias!r}")
        if ref.alias is None and len(aliases) != 1:
            raise SqlParseError(f"unqualified column _c{ref.index} with multiple tables")

    has_agg = False
    if query.select != "*":
        for item in query.select:
            if isinstance(item.expr, Aggregate):
                has_agg = True
                if item.expr.arg is not None:
                    check_ref(item.expr.arg)
            else:
                check_ref(item.expr)
    for cmp_ in query.where:
        for side in (cmp_.left, cmp_.right):
            if isinstance(side, ColRef):
                check_ref(side)
    for col in query.group_by:
        check_ref(col)

    if (has_agg or query.group_by) and query.select == "*":
        raise SqlParseError("SELECT * cannot be combined with aggregation")
    if has_agg or query.group_by:
        group_keys = {_qualify(c, aliases) for c in query.group_by}
        for item in query.select:
            if isinstance(item.expr, ColRef) and _qualify(item.expr, aliases) not in group_keys:
                raise SqlParseError(
                    f"non-aggregate column _c{item.expr.index} must appear in GROUP BY"
                )


def _qualify(ref: ColRef, aliases) -> ColRef:
    if ref.alias is None:
        return ColRef(aliases[0], ref.index)
    return ref


# ----------------------------------------------------------------------
# evaluation

def parse_rows(data: bytes) -> list:
    text = data.decode("utf-8", "replace")
    if text.endswith("\n"):
        text = text[:-1]
    if not text:
        return []
    return [line.split(",") for line in text.split("\n")]


def format_rows(rows) -> bytes:
    return "".join(",".join(row) + "\n" for row in rows).encode("utf-8")


def _numeric(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return None


def _compare(a: str, b: str, op: str) -> bool:
    na, nb = _numeric(a), _numeric(b)
    if na is not None and nb is not None:
        a, b = na, nb
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _literal_text(value) -> str:
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else str(value)
    return str(value)


def format_number(x: float) -> str:
    return str(int(x)) if x.is_integer() else str(x)


class _Evaluator:
    def __init__(self, query: ViewQuery, tables: dict):
        self.query = query
        self.aliases = query.aliases
        self.tables = tables

    def cell(self, ref: ColRef, combo) -> str:
        alias = ref.alias or self.aliases[0]
        row = self.tables[alias][combo[alias]]
        if ref.index >= len(row):
            raise EvaluationError(
                f"column _c{ref.index} out of range for {alias} (row has {len(row)} columns)"
            )
        return row[ref.index]

    def operand(self, side, combo) -> str:
        if isinstance(side, ColRef):
            return self.cell(side, combo)
        return _literal_text(side)

    def run(self):
        survivors = []
        for picks in itertools.product(*(range(len(self.tables[a])) for a in self.aliases)):
            combo = dict(zip(self.aliases, picks))
            if all(
                _compare(self.operand(c.left, combo), self.operand(c.right, combo), c.op)
                for c in self.query.where
            ):
                survivors.append(combo)
        if self.query.group_by or self._has_agg():
            return self._grouped(survivors)
        return self._spj(survivors)

    def _has_agg(self):
        return self.query.select != "*" and any(
            isinstance(item.expr, Aggregate) for item in self.query.select
        )

    def _spj(self, survivors):
        rows = []
        lineage = {}
        for i, combo in enumerate(survivors):
            if self.query.select == "*":
                row = []
                for alias in self.aliases:
                    row.extend(self.tables[alias][combo[alias]])
            else:
                row = [self.cell(item.expr, combo) for item in self.query.select]
            rows.append(row)
            lineage[i] = [(alias, combo[alias]) for alias in self.aliases]
        return rows, lineage

    def _grouped(self, survivors):
        groups: dict = {}
        order = []
        for combo in survivors:
            key = tuple(self.cell(col, combo) for col in self.query.group_by)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(combo)
        rows = []
        lineage = {}
        for i, key in enumerate(order):
            members = groups[key]
            rows.append([self._aggregate(item, key, members) for item in self.query.select])
            witnesses = set()
            for combo in members:
                witnesses.update((alias, combo[alias]) for alias in self.aliases)
            lineage[i] = sorted(witnesses)
        return rows, lineage

    def _aggregate(self, item: SelectItem, key, members) -> str:
        expr = item.expr
        if isinstance(expr, ColRef):
            qualified = _qualify(expr, self.aliases)
            keys = [_qualify(c, self.aliases) for c in self.query.group_by]
            return key[keys.index(qualified)]
        if expr.func == "count" and expr.arg is None:
            return format_number(float(len(members)))
        values = [self.cell(expr.arg, combo) for combo in members]
        if expr.func == "count":
            return format_number(float(sum(1 for v in values if v != "")))
        if expr.func in ("sum", "avg"):
            nums = [_numeric(v) for v in values]
            if any(n is None for n in nums):
                raise EvaluationError(f"{expr.func} over non-numeric values")
            total = sum(nums)
            return format_number(total if expr.func == "sum" else total / len(nums))
        nums = [_numeric(v) for v in values]
        if all(n is not None for n in nums):
            return format_number(min(nums) if expr.func == "min" else max(nums))
        return min(values) if expr.func == "min" else max(values)


def evaluate(query: ViewQuery, inputs: dict):
    """Evaluate a parsed query against alias -> rows inputs.

    Returns (rows, lineage) where lineage maps output row index to its
    witness tuples [(alias, input row index), ...]. Re-evaluating the query
    on just one SPJ row's witnesses reproduces exactly that row.
    """
    for _, alias in query.from_list:
        if alias not in inputs:
            raise EvaluationError(f"missing input for alias {alias!r}")
    return _Evaluator(query, inputs).run()


# ----------------------------------------------------------------------
# view registry and materialization

def create_view(repo, name, sql, mode="virtual"):
    if mode not in ("virtual", "materialized"):
        raise ValueError(f"mode must be virtual or materialized, not {mode!r}")
    query = parse_view_sql(sql)  # parse errors propagate
    with repo.lock():
        views = repo.read_views()
        if name in views:
            raise NameCollisionError(f"view {name!r} already exists")
        artifact = repo.artifact_by_path(name)
        if artifact is not None and (mode == "virtual" or not _is_view_output(repo, name)):
            # a Materialized view may refresh its own prior output, nothing else
            raise NameCollisionError(f"{name!r} collides with a tracked artifact")
        views[name] = {
            "sql": sql,
            "mode": mode,
            "view_reads": 0,
            "created": time.time(),
            "inputs": [path for path, _ in query.from_list],
        }
        repo.write_views(views)
        return views[name]


def _is_view_output(repo, name) -> bool:
    artifact = repo.artifact_by_path(name)
    if artifact is None:
        return False
    snaps = repo.snapshots_of_artifact(artifact.id)
    if not snaps:
        return False
    producers = repo.graph.in_edges(snaps[-1].id, "PRODUCED")
    return any(
        repo.graph.get_node(e.src).value("fileview_name") == name for e in producers
    )


def list_views(repo) -> dict:
    return repo.read_views()


def drop_view(repo, name):
    with repo.lock():
        views = repo.read_views()
        if name not in views:
            raise UnknownViewError(f"no view named {name!r}")
        del views[name]
        repo.write_views(views)


def read_view(repo, name):
    """Evaluate a view from the latest snapshots of its inputs (no version minted)."""
    views = repo.read_views()
    if name not in views:
        raise UnknownViewError(f"no view named {name!r}")
    entry = views[name]
    query = parse_view_sql(entry["sql"])
    head = repo.head_state()
    inputs = {}
    for path, alias in query.from_list:
        if path not in head:
            raise EvaluationError(f"missing input file {path!r}")
        inputs[alias] = parse_rows(repo.store.get(head[path].digest))
    rows, lineage = evaluate(query, inputs)
    entry["view_reads"] = entry.get("view_reads", 0) + 1
    repo.write_views(views)
    return rows, lineage


def materialize(repo, name):
    """Write a view's output file through the capture machinery.

    The materialization becomes a derivation with USED = input snapshots,
    PRODUCED = the output snapshot, the query text as `fileview_sql`, and
    the record lineage attached.
    """
    views = repo.read_views()
    if name not in views:
        raise UnknownViewError(f"no view named {name!r}")
    entry = views[name]
    query = parse_view_sql(entry["sql"])
    input_paths = [path for path, _ in query.from_list]
    alias_path = {alias: path for path, alias in query.from_list}
    deltas = []

    def writer():
        inputs = {}
        for path, alias in query.from_list:
            try:
                with open(repo.root / path, "rb") as fh:
                    inputs[alias] = parse_rows(fh.read())
            except OSError:
                raise EvaluationError(f"missing input file {path!r}") from None
        rows, lineage = evaluate(query, inputs)
        with open(repo.root / name, "wb") as fh:
            fh.write(format_rows(rows))
        record_lineage = [
            (name, out_row, [(alias_path[a], idx) for a, idx in witnesses])
            for out_row, witnesses in sorted(lineage.items())
        ]
        deltas.append(
            PropertyDelta(
                source="fileview",
                target="derivation",
                entries={"fileview_sql": entry["sql"], "fileview_name": name},
                record_lineage=record_lineage,
            )
        )

    pseudo = f"fileview -e -n={name} -q={entry['sql']}"
    result = run_captured_internal(
        repo, pseudo, writer, used_paths=input_paths, extra_deltas=deltas
    )
    return result
