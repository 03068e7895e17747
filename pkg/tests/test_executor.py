from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from eltforge.compiler import Literal, PipelineSpec, TaskNode, build, serialize
from eltforge.executor import (
    Backends,
    Dataset,
    ExecutionRefused,
    TransformError,
    dataset_to_csv,
    emit_summary,
    execute,
    normalize_csv,
    read_csv_dataset,
    read_destination,
    read_jsonl_dataset,
    run_transform,
)
from eltforge.safety import SafetyVerdict, VerdictStatus, scan

from conftest import make_spec, write_orders_fixture


def ds(columns, types, rows) -> Dataset:
    return Dataset(tuple(columns), tuple(types), tuple(tuple(r) for r in rows))


NUMS = ds(["a", "b"], ["int", "string"], [(i, f"s{i}") for i in range(1, 11)])


class TestTransforms:
    def test_select_keeps_named_columns_in_order(self):
        out = run_transform({"op": "select", "params": {"columns": ["b"]}}, NUMS)
        assert out.columns == ("b",)
        assert out.row_count == 10

    def test_select_unknown_column(self):
        with pytest.raises(TransformError, match="unknown column"):
            run_transform({"op": "select", "params": {"columns": ["zz"]}}, NUMS)

    def test_rename_maps_and_rejects_collisions(self):
        out = run_transform({"op": "rename", "params": {"mapping": {"a": "key"}}}, NUMS)
        assert out.columns == ("key", "b")
        with pytest.raises(TransformError, match="duplicate"):
            run_transform({"op": "rename", "params": {"mapping": {"a": "b"}}}, NUMS)

    def test_filter_greater_than(self):
        out = run_transform(
            {"op": "filter", "params": {"column": "a", "op": ">", "value": 5}}, NUMS
        )
        assert out.row_count == 5
        assert all(row[0] > 5 for row in out.rows)

    def test_filter_brute_force_over_all_ops(self):
        ops = {
            "=": lambda a, b: a == b,
            "!=": lambda a, b: a != b,
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
        }
        for op, fn in ops.items():
            out = run_transform(
                {"op": "filter", "params": {"column": "a", "op": op, "value": 5}}, NUMS
            )
            expected = [row for row in NUMS.rows if fn(row[0], 5)]
            assert list(out.rows) == expected, op

    def test_filter_contains(self):
        out = run_transform(
            {"op": "filter", "params": {"column": "b", "op": "contains", "value": "s1"}}, NUMS
        )
        assert [r[1] for r in out.rows] == ["s1", "s10"]

    def test_cast_strict_failure_names_row(self):
        data = ds(["x"], ["string"], [("1",), ("2",), ("oops",)])
        with pytest.raises(TransformError, match="row 2"):
            run_transform({"op": "cast", "params": {"column": "x", "to": "int"}}, data)

    def test_cast_int_to_float(self):
        out = run_transform({"op": "cast", "params": {"column": "a", "to": "float"}}, NUMS)
        assert out.types[0] == "float"
        assert out.rows[0][0] == 1.0

    def test_dedupe_keeps_first(self):
        data = ds(["x"], ["int"], [(1,), (2,), (1,), (3,), (2,)])
        out = run_transform({"op": "dedupe", "params": {}}, data)
        assert [r[0] for r in out.rows] == [1, 2, 3]

    def test_aggregate_degenerate_grouping(self):
        out = run_transform(
            {"op": "aggregate", "params": {"group_by": [], "measures": [{"fn": "count"}]}},
            NUMS,
        )
        assert out.columns == ("count",)
        assert out.rows == ((10,),)

    def test_aggregate_sum_matches_brute_force(self):
        data = ds(
            ["g", "v"],
            ["string", "float"],
            [("a", 1.25), ("b", 2.5), ("a", 3.125), ("b", 0.5), ("a", 2.0)],
        )
        out = run_transform(
            {
                "op": "aggregate",
                "params": {"group_by": ["g"], "measures": [{"fn": "sum", "col": "v"}]},
            },
            data,
        )
        expected = {}
        for g, v in data.rows:
            expected[g] = expected.get(g, 0.0) + v
        assert {r[0]: r[1] for r in out.rows} == pytest.approx(expected)

    def test_aggregate_avg_and_count(self):
        out = run_transform(
            {
                "op": "aggregate",
                "params": {
                    "group_by": [],
                    "measures": [{"fn": "avg", "col": "a"}, {"fn": "count"}],
                },
            },
            NUMS,
        )
        assert out.columns == ("avg_a", "count")
        assert out.rows == ((5.5, 10),)

    def test_unknown_op_rejected(self):
        with pytest.raises(TransformError):
            run_transform({"op": "explode", "params": {}}, NUMS)


class TestEmitSummary:
    def test_three_groups_make_three_rows_and_bar_chart(self):
        data = ds(
            ["severity"],
            ["string"],
            [("high",), ("low",), ("high",), ("medium",), ("low",), ("high",)],
        )
        out = emit_summary(data, {"group_by": ["severity"], "measures": [{"fn": "count"}]})
        lines = [l for l in out["table"].splitlines() if l]
        assert lines[0] == "severity,count"
        assert len(lines) == 4
        assert out["chart"]["kind"] == "bar"
        assert out["chart"]["x"] == "severity"
        assert out["chart"]["y"] == "count"
        assert len(out["chart"]["data"]) == 3

    def test_empty_dataset_gives_zero_row_csv_and_empty_data(self):
        data = ds(["severity"], ["string"], [])
        out = emit_summary(data, {"group_by": ["severity"], "measures": [{"fn": "count"}]})
        assert out["table"].splitlines()[0] == "severity,count"
        assert len([l for l in out["table"].splitlines() if l]) == 1
        assert out["chart"]["data"] == []

    def test_float_sum_matches_independent_summation(self):
        values = [0.5, 1.25, 2.125, 3.0625]
        data = ds(["v"], ["float"], [(v,) for v in values])
        out = emit_summary(data, {"group_by": [], "measures": [{"fn": "sum", "col": "v"}]})
        total = 0.0
        for v in values:
            total += v
        assert out["chart"]["data"] == [{"sum_v": total}]

    def test_line_chart_kind_honored(self):
        out = emit_summary(NUMS, {"group_by": ["b"], "measures": [{"fn": "count"}], "kind": "line"})
        assert out["chart"]["kind"] == "line"


class TestIo:
    def test_csv_round_trip_with_sidecar_types(self, tmp_path):
        data = ds(["n", "f", "b", "s"], ["int", "float", "bool", "string"],
                  [(1, 1.5, True, "x"), (2, 2.5, False, "y,z")])
        path = tmp_path / "t.csv"
        path.write_text(dataset_to_csv(data), newline="")
        sidecar = {"columns": [{"name": c, "type": t} for c, t in zip(data.columns, data.types)]}
        path.with_suffix(".schema.json").write_text(json.dumps(sidecar))
        back = read_csv_dataset(path)
        assert back.columns == data.columns
        assert back.types == data.types
        assert back.rows == data.rows

    def test_csv_inference(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("i,f,b,s\n1,1.5,true,abc\n2,2.25,false,def\n")
        back = read_csv_dataset(path)
        assert back.types == ("int", "float", "bool", "string")

    def test_jsonl_reader_types_from_first_record(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"a": 1, "b": "x", "c": true}\n{"a": 2, "b": "y", "c": false}\n')
        back = read_jsonl_dataset(path)
        assert back.schema == {"a": "int", "b": "string", "c": "bool"}
        assert back.row_count == 2

    def test_normalize_csv_is_idempotent_and_quote_canonical(self):
        messy = 'a,b\r\n"1","x y"\r\n2,"has,comma"\r\n'
        normalized = normalize_csv(messy)
        assert normalize_csv(normalized) == normalized
        assert '"1"' not in normalized  # unneeded quotes dropped
        assert '"has,comma"' in normalized


def build_verdict(p: PipelineSpec, catalog) -> SafetyVerdict:
    verdict = scan(p, catalog)
    assert verdict.status is VerdictStatus.PASS
    return verdict


class TestExecute:
    def test_extract_load_audit_roundtrip(self, catalog, backends):
        write_orders_fixture(backends.data_root, rows=100)
        p = build(make_spec(), list(catalog))
        record = execute(p, backends, build_verdict(p, catalog), catalog)
        assert record.succeeded
        assert record.audit.rows_extracted == 100
        assert record.audit.rows_loaded == 100
        assert record.audit.passed

    def test_declared_row_dropping_keeps_audit_green(self, catalog, backends):
        fx = backends.data_root / "orders"
        fx.mkdir(parents=True)
        lines = ["id,amount"] + [f"{i},{i}" for i in range(1, 100)] + ["1,1"]
        (fx / "orders.csv").write_text("\n".join(lines) + "\n")
        p = build(make_spec(transforms=(("dedupe", {}),)), list(catalog))
        record = execute(p, backends, build_verdict(p, catalog), catalog)
        assert record.succeeded
        assert record.audit.rows_extracted == 100
        assert record.audit.rows_loaded == 99
        assert record.audit.passed

    def test_undeclared_row_loss_fails_audit(self, catalog, backends):
        write_orders_fixture(backends.data_root, rows=100)
        p = build(make_spec(transforms=(("filter", {"column": "id", "op": "<", "value": 100}),)), list(catalog))
        tasks = dict(p.tasks)
        tasks["validate"] = TaskNode(
            component=tasks["validate"].component,
            bindings={**tasks["validate"].bindings, "allow_row_loss": Literal(False)},
        )
        tampered = PipelineSpec(p.name, p.parameters, p.components, tasks, p.metadata)
        record = execute(tampered, backends, build_verdict(tampered, catalog), catalog)
        assert record.audit.rows_extracted == 100
        assert record.audit.rows_loaded == 99
        assert not record.audit.passed
        assert not record.succeeded

    def test_rejected_verdict_refused(self, catalog, backends):
        p = build(make_spec(), list(catalog))
        rejected = SafetyVerdict(VerdictStatus.REJECTED)
        with pytest.raises(ExecutionRefused):
            execute(p, backends, rejected, catalog)

    def test_missing_fixture_fails_and_skips_dependents(self, catalog, backends):
        p = build(make_spec(sources=(("local_dir", "nowhere"),)), list(catalog))
        record = execute(p, backends, build_verdict(p, catalog), catalog)
        assert record.tasks["extract_1"].status == "failed"
        assert record.tasks["extract_1"].reason.startswith("io:")
        assert record.tasks["load"].status == "skipped"
        assert record.tasks["validate"].status == "skipped"
        assert not record.succeeded

    def test_type_mismatch_mid_chain_fails_schema(self, catalog, backends):
        fx = backends.data_root / "orders"
        fx.mkdir(parents=True)
        (fx / "orders.csv").write_text("id,amount\n1,abc\n2,def\n")
        p = build(make_spec(transforms=(("cast", {"column": "amount", "to": "int"}),)), list(catalog))
        record = execute(p, backends, build_verdict(p, catalog), catalog)
        assert record.tasks["transform_1"].status == "failed"
        assert record.tasks["transform_1"].reason.startswith("transform:")
        assert record.tasks["load"].status == "skipped"

    def test_fan_in_concatenates_in_binding_order(self, catalog, backends):
        for name, rows in (("a", [(1,)]), ("b", [(2,), (3,)])):
            fx = backends.data_root / name
            fx.mkdir(parents=True)
            (fx / "part.csv").write_text("id\n" + "\n".join(str(r[0]) for r in rows) + "\n")
        p = build(
            make_spec(sources=(("local_dir", "a"), ("local_dir", "b")), transforms=(("dedupe", {}),)),
            list(catalog),
        )
        record = execute(p, backends, build_verdict(p, catalog), catalog)
        assert record.succeeded
        out = read_destination({"kind": "table_store", "locator": "main", "name": "orders"}, backends)
        assert [r[0] for r in out.rows] == [1, 2, 3]

    def test_schedule_independence_on_fan_out_pipeline(self, catalog, tmp_path):
        spec = make_spec(
            sources=(("local_dir", "a"), ("local_dir", "b"), ("local_dir", "c")),
            transforms=(("dedupe", {}),),
        )
        p = build(spec, list(catalog))
        verdict = scan(p, catalog)
        records = []
        outputs = []
        for workers in (1, 4):
            root = tmp_path / f"w{workers}"
            for name in ("a", "b", "c"):
                fx = root / name
                fx.mkdir(parents=True)
                (fx / "part.csv").write_text("id\n1\n2\n3\n")
            be = Backends(data_root=root)
            records.append(execute(p, be, verdict, catalog, max_workers=workers))
            outputs.append(
                read_destination({"kind": "table_store", "locator": "main", "name": "orders"}, be)
            )
        assert records[0].comparable() == records[1].comparable()
        assert outputs[0].rows == outputs[1].rows
        assert outputs[0].schema == outputs[1].schema

    def test_synthesized_tool_body_executes(self, catalog, backends):
        import json as _json

        from eltforge.providers import ScriptedProvider
        from eltforge.tools import synthesize_tool

        write_orders_fixture(backends.data_root, rows=4)
        provider = ScriptedProvider(
            [
                _json.dumps(
                    {
                        "id": "keep_small_ids",
                        "description": "keep rows with small ids",
                        "body": {
                            "op": "filter",
                            "params": {"column": "id", "op": "<=", "value": 2},
                        },
                    }
                )
            ]
        )
        synthesize_tool("keep small ids", provider, catalog, "sess/")
        try:
            p = build(make_spec(transforms=(("keep_small_ids", {}),)), list(catalog))
            record = execute(p, backends, build_verdict(p, catalog), catalog)
            assert record.succeeded
            out = read_destination(
                {"kind": "table_store", "locator": "main", "name": "orders"}, backends
            )
            assert out.row_count == 2
        finally:
            catalog._tools.pop("keep_small_ids", None)
            catalog._rebuild_idf()


@given(
    st.lists(
        st.tuples(st.integers(min_value=-5, max_value=5), st.sampled_from(["x", "y"])),
        max_size=12,
    ),
    st.sampled_from(["=", "!=", "<", "<=", ">", ">="]),
    st.integers(min_value=-5, max_value=5),
)
def test_filter_property_against_python_predicate(rows, op, literal):
    import operator

    fns = {
        "=": operator.eq,
        "!=": operator.ne,
        "<": operator.lt,
        "<=": operator.le,
        ">": operator.gt,
        ">=": operator.ge,
    }
    data = ds(["n", "s"], ["int", "string"], rows)
    out = run_transform(
        {"op": "filter", "params": {"column": "n", "op": op, "value": literal}}, data
    )
    assert list(out.rows) == [r for r in data.rows if fns[op](r[0], literal)]
