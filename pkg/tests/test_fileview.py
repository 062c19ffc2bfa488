import random

import pytest

from provtrail.capture import run_captured
from provtrail.errors import (
    EvaluationError,
    NameCollisionError,
    SqlParseError,
    UnknownViewError,
)
from provtrail.fileview import (
    Aggregate,
    ColRef,
    Comparison,
    SelectItem,
    ViewQuery,
    create_view,
    drop_view,
    evaluate,
    format_rows,
    list_views,
    materialize,
    parse_rows,
    parse_view_sql,
    read_view,
)

from conftest import write
from oracle_fileview import brute_force

ERR_CNT_SQL = (
    "select t._c2 as label, count(*) as err_cnt "
    "from {testfile.csv} as t, {predfile.csv} as r "
    "where t._c0 = r._c0 and t._c2 != r._c2 group by t._c2"
)


class TestParse:
    def test_err_cnt_query_shape(self):
        q = parse_view_sql(ERR_CNT_SQL)
        assert q.from_list == [("testfile.csv", "t"), ("predfile.csv", "r")]
        assert q.select == [
            SelectItem(ColRef("t", 2), "label"),
            SelectItem(Aggregate("count", None), "err_cnt"),
        ]
        assert q.where == [
            Comparison(ColRef("t", 0), "=", ColRef("r", 0)),
            Comparison(ColRef("t", 2), "!=", ColRef("r", 2)),
        ]
        assert q.group_by == [ColRef("t", 2)]

    def test_identity_query(self):
        q = parse_view_sql("select * from {f.csv} as f")
        assert q.select == "*"
        assert q.from_list == [("f.csv", "f")]
        assert q.where == [] and q.group_by == []

    def test_keywords_case_insensitive(self):
        q = parse_view_sql("SeLeCt f._c0 FrOm {f.csv} As f WhErE f._c0 > 1 GrOuP bY f._c0")
        assert q.group_by == [ColRef("f", 0)]

    def test_syntax_error_has_position(self):
        with pytest.raises(SqlParseError) as err:
            parse_view_sql("select from {f.csv} as f")
        assert err.value.position is not None

    def test_aggregate_groupby_mismatch(self):
        with pytest.raises(SqlParseError):
            parse_view_sql("select f._c0, count(*) from {f.csv} as f")

    def test_duplicate_alias_rejected(self):
        with pytest.raises(SqlParseError):
            parse_view_sql("select t._c0 from {a.csv} as t, {b.csv} as t")

    def test_string_and_number_literals(self):
        q = parse_view_sql("select f._c0 from {f.csv} as f where f._c1 = 'x y' and f._c0 >= 2.5")
        assert q.where[0].right == "x y"
        assert q.where[1].right == 2.5


def rows_of(text):
    return parse_rows(text.encode())


class TestEvaluate:
    def test_err_cnt_fixture(self):
        # oracle: hand evaluation over all row pairs (see derivation in comments)
        # t x r combos passing _c0 equality: (0,0) (1,1) (2,2);
        # of those, _c2 differs for t1/r1 (B vs A) and t2/r2 (A vs B)
        test_rows = rows_of("1,x,A\n2,y,B\n3,z,A\n")
        pred_rows = rows_of("1,x,A\n2,y,A\n3,z,B\n")
        q = parse_view_sql(ERR_CNT_SQL)
        rows, lineage = evaluate(q, {"t": test_rows, "r": pred_rows})
        assert rows == [["B", "1"], ["A", "1"]]
        assert lineage[0] == [("r", 1), ("t", 1)]
        assert lineage[1] == [("r", 2), ("t", 2)]

    def test_identity_select_star(self):
        data = rows_of("a,1\nb,2\nc,3\n")
        q = parse_view_sql("select * from {f.csv} as f")
        rows, lineage = evaluate(q, {"f": data})
        assert rows == data
        assert lineage == {0: [("f", 0)], 1: [("f", 1)], 2: [("f", 2)]}

    def test_where_without_matches(self):
        q = parse_view_sql("select f._c0 from {f.csv} as f where f._c0 > 100")
        rows, lineage = evaluate(q, {"f": rows_of("1\n2\n")})
        assert rows == [] and lineage == {}

    def test_arity_error(self):
        q = parse_view_sql("select f._c9 from {f.csv} as f")
        with pytest.raises(EvaluationError):
            evaluate(q, {"f": rows_of("a,b\n")})

    def test_numeric_vs_string_comparison(self):
        q = parse_view_sql("select f._c0 from {f.csv} as f where f._c0 < 10")
        rows, _ = evaluate(q, {"f": rows_of("9\n11\n2\n")})
        assert rows == [["9"], ["2"]]  # numeric, not lexicographic
        q2 = parse_view_sql("select f._c0 from {f.csv} as f where f._c0 < 'b'")
        rows2, _ = evaluate(q2, {"f": rows_of("a\nc\n")})
        assert rows2 == [["a"]]

    def test_aggregate_formatting(self):
        q = parse_view_sql(
            "select f._c0, sum(f._c1) as s, avg(f._c1) as m from {f.csv} as f group by f._c0"
        )
        rows, _ = evaluate(q, {"f": rows_of("g,1\ng,2\nh,2.5\n")})
        assert rows == [["g", "3", "1.5"], ["h", "2.5", "2.5"]]


def _random_instance(rng):
    n_tables = rng.choice([1, 1, 2])
    tables = {}
    files = []
    for t in range(n_tables):
        alias = "tr"[t]
        n_rows = rng.randrange(0, 9)
        n_cols = rng.randrange(1, 5)
        tables[alias] = [
            [rng.choice(["a", "b", "", str(rng.randrange(0, 5))]) for _ in range(n_cols)]
            for _ in range(n_rows)
        ]
        files.append((f"{alias}.csv", alias))
    aliases = [a for _, a in files]

    def rand_col():
        alias = rng.choice(aliases)
        return alias, rng.randrange(0, len(tables[alias][0]) if tables[alias] else 1)

    # where: 0-2 comparisons
    where = []
    where_sql = []
    for _ in range(rng.randrange(0, 3)):
        la, li = rand_col()
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        if rng.random() < 0.5:
            ra, ri = rand_col()
            where.append((("col", la, li), op, ("col", ra, ri)))
            where_sql.append(f"{la}._c{li} {op} {ra}._c{ri}")
        else:
            lit = rng.choice([0.0, 1.0, 2.0, "a", "b"])
            where.append((("col", la, li), op, ("lit", lit)))
            lit_sql = f"'{lit}'" if isinstance(lit, str) else str(int(lit))
            where_sql.append(f"{la}._c{li} {op} {lit_sql}")

    grouped = rng.random() < 0.5
    if grouped:
        n_keys = rng.randrange(1, 3)
        keys = []
        for _ in range(n_keys):
            a, i = rand_col()
            if ("col", a, i) not in keys:
                keys.append(("col", a, i))
        select = list(keys)
        select_sql = [f"{a}._c{i}" for _, a, i in keys]
        for _ in range(rng.randrange(1, 3)):
            func = rng.choice(["count", "count*", "min", "max"])
            if func == "count*":
                select.append(("agg", "count", None))
                select_sql.append("count(*)")
            else:
                a, i = rand_col()
                select.append(("agg", func, ("col", a, i)))
                select_sql.append(f"{func}({a}._c{i})")
        group_sql = " group by " + ", ".join(f"{a}._c{i}" for _, a, i in keys)
        group_by = keys
    else:
        n_sel = rng.randrange(1, 4)
        select = []
        select_sql = []
        for _ in range(n_sel):
            a, i = rand_col()
            select.append(("col", a, i))
            select_sql.append(f"{a}._c{i}")
        group_sql = ""
        group_by = []

    sql = "select " + ", ".join(select_sql)
    sql += " from " + ", ".join(f"{{{path}}} as {alias}" for path, alias in files)
    if where_sql:
        sql += " where " + " and ".join(where_sql)
    sql += group_sql
    return tables, aliases, select, where, group_by, sql


def test_randomized_oracle_equivalence():
    rng = random.Random(2024)
    checked = 0
    for _ in range(300):
        tables, aliases, select, where, group_by, sql = _random_instance(rng)
        query = parse_view_sql(sql)
        rows, lineage = evaluate(query, tables)
        expected_rows, expected_lineage = brute_force(tables, aliases, select, where, group_by)
        assert [tuple(r) for r in rows] == list(expected_rows), sql
        assert {i: sorted(w) for i, w in lineage.items()} == expected_lineage, sql
        checked += 1
        # witness re-evaluation for SPJ rows: the witness subset alone
        # reproduces exactly that output row
        if not group_by and rows:
            i = rng.randrange(len(rows))
            sub_inputs = {
                alias: [tables[alias][idx] for a2, idx in lineage[i] if a2 == alias]
                for alias in aliases
            }
            sub_rows, _ = evaluate(query, sub_inputs)
            assert sub_rows == [rows[i]], sql
    assert checked == 300


def test_determinism_byte_identical():
    rng = random.Random(5)
    tables, aliases, select, where, group_by, sql = _random_instance(rng)
    query = parse_view_sql(sql)
    out1 = format_rows(evaluate(query, tables)[0])
    out2 = format_rows(evaluate(query, tables)[0])
    assert out1 == out2


class TestViewsOnRepo:
    def _seed_inputs(self, repo, workdir):
        write(workdir, "testfile.csv", "1,x,A\n2,y,B\n3,z,A\n")
        write(workdir, "predfile.csv", "1,x,A\n2,y,A\n3,z,B\n")
        run_captured(repo, "true")  # absorb into a version

    def test_create_materialize_err_cnt_query(self, repo, workdir):
        self._seed_inputs(repo, workdir)
        create_view(repo, "results.csv", ERR_CNT_SQL, mode="materialized")
        result = materialize(repo, "results.csv")
        assert (workdir / "results.csv").read_text() == "B,1\nA,1\n"
        node = repo.graph.get_node(result.derivation_id)
        assert node.value("fileview_sql") == ERR_CNT_SQL
        used = {
            repo.graph.get_node(e.dst).value("path")
            for e in repo.graph.out_edges(result.derivation_id, "USED")
        }
        assert used == {"testfile.csv", "predfile.csv"}
        produced = {
            repo.graph.get_node(e.dst).value("path")
            for e in repo.graph.out_edges(result.derivation_id, "PRODUCED")
        }
        assert produced == {"results.csv"}
        lineage = node.value("record_lineage")
        assert lineage["results.csv"]["0"] == [["predfile.csv", 1.0], ["testfile.csv", 1.0]]

    def test_lineage_witnesses_reevaluate(self, repo, workdir):
        self._seed_inputs(repo, workdir)
        create_view(repo, "results.csv", ERR_CNT_SQL, mode="materialized")
        result = materialize(repo, "results.csv")
        lineage = repo.graph.get_node(result.derivation_id).value("record_lineage")
        witnesses = lineage["results.csv"]["0"]
        query = parse_view_sql(ERR_CNT_SQL)
        sub = {"t": [], "r": []}
        path_alias = {"testfile.csv": "t", "predfile.csv": "r"}
        full = {
            "t": parse_rows((workdir / "testfile.csv").read_bytes()),
            "r": parse_rows((workdir / "predfile.csv").read_bytes()),
        }
        for path, idx in witnesses:
            alias = path_alias[path]
            sub[alias].append(full[alias][int(idx)])
        rows, _ = evaluate(query, sub)
        assert rows == [["B", "1"]]

    def test_virtual_view_freshness(self, repo, workdir):
        write(workdir, "vals.csv", "1\n2\n")
        run_captured(repo, "true")
        create_view(repo, "doubled", "select v._c0 from {vals.csv} as v where v._c0 > 1")
        rows1, _ = read_view(repo, "doubled")
        assert rows1 == [["2"]]
        run_captured(repo, "sh -c 'printf \"1\\n2\\n9\\n\" > vals.csv'")
        rows2, _ = read_view(repo, "doubled")
        assert rows2 == [["2"], ["9"]]
        assert list_views(repo)["doubled"]["view_reads"] == 2

    def test_name_collision(self, repo, workdir):
        write(workdir, "taken.csv", "1\n")
        run_captured(repo, "true")
        with pytest.raises(NameCollisionError):
            create_view(repo, "taken.csv", "select * from {vals.csv} as v")

    def test_materialized_refresh_allowed(self, repo, workdir):
        self._seed_inputs(repo, workdir)
        create_view(repo, "results.csv", ERR_CNT_SQL, mode="materialized")
        materialize(repo, "results.csv")
        materialize(repo, "results.csv")  # refresh over its own output

    def test_drop_and_unknown(self, repo):
        create_view(repo, "v1", "select * from {x.csv} as x")
        drop_view(repo, "v1")
        with pytest.raises(UnknownViewError):
            read_view(repo, "v1")
